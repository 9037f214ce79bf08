#!/usr/bin/env python3
"""Generates the bundled toy corpus and its gold labels.

Gold labels come from a Python re-implementation of the mock judge rules,
written without reference to the C++ code paths: NFC, punctuation to space,
CJK bigrams, MF relevance by token Jaccard, LF relevance by shared lexicon
terms. The texts use Han characters and CJK punctuation only, so the simple
script test below is exact for them.
"""

import argparse
import json
import random
import unicodedata
from pathlib import Path

THRESHOLD = 0.4

LEXICON = [
    "盗窃", "抢劫", "诈骗", "故意伤害", "交通肇事", "受贿",
    "非法拘禁", "敲诈勒索", "危险驾驶", "寻衅滋事", "职务侵占", "故意毁坏财物",
]

SURNAMES = "张王李赵刘陈杨黄周吴徐孙胡朱高林何郭马罗"
TIMES = ["于二〇一八年春节前后", "于二〇一九年五月某日深夜", "于二〇二〇年夏季某日凌晨",
         "于二〇二一年十月中旬", "于二〇一七年冬季某日傍晚", "于二〇二二年元旦当天"]
FRAGMENTS = [
    "在城郊一处出租屋内", "在某小区地下车库", "在县城农贸市场门口", "在一家烧烤店包间",
    "在高速公路服务区", "在镇政府附近路段", "在某工业园区仓库", "在火车站候车大厅",
    "与被害人因琐事发生争执", "趁被害人熟睡之机", "驾驶一辆白色轿车", "携带一根铁棍",
    "伙同他人事先商议", "以介绍工作为名", "冒充银行客服人员", "利用担任出纳的便利",
    "将被害人反锁在房间", "拿走柜台抽屉里的现金", "砸坏店内玻璃门和收银机", "拨打电话索要钱款",
    "收取工程老板好处费", "致被害人左臂骨折", "造成路边行人受伤", "涉案财物价值两万余元",
    "事后将赃款挥霍一空", "案发后主动投案自首", "归案后如实供述罪行", "被害人家属出具谅解书",
    "经鉴定构成轻伤二级", "血液酒精含量超标", "现场监控录像清晰可见", "同案人员另案处理",
    "赔偿被害人经济损失", "公安机关接警后赶到现场", "涉案车辆已被依法扣押", "被告人当庭表示认罪",
    "邻居听到呼救声后报警", "案发时天色已晚", "被害人随即前往医院", "双方曾有债务纠纷",
]


# ---------------------------------------------------------------------------
# Oracle

def is_cjk(ch):
    cp = ord(ch)
    return (0x4E00 <= cp <= 0x9FFF or 0x3400 <= cp <= 0x4DBF or cp == 0x3007
            or 0x3040 <= cp <= 0x30FF or 0xAC00 <= cp <= 0xD7AF)


def is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def tokens(text):
    text = unicodedata.normalize("NFC", text)
    text = "".join(" " if is_punct(ch) else ch for ch in text)
    out = []
    for chunk in text.split():
        run, seg = "", ""
        for ch in chunk + "\0":
            if ch != "\0" and is_cjk(ch):
                if seg:
                    out.append(seg)
                    seg = ""
                run += ch
                continue
            if run:
                out.extend([run] if len(run) == 1 else [run[i:i + 2] for i in range(len(run) - 1)])
                run = ""
            if ch != "\0":
                seg += ch
        if seg:
            out.append(seg)
    seen, uniq = set(), []
    for t in out:
        if t not in seen:
            seen.add(t)
            uniq.append(t)
    return uniq


def lexicon_terms(text):
    have = set(tokens(text))
    return sorted(t for t in LEXICON if set(tokens(t)) <= have)


def fe_mf(fact_text):
    return " ".join(tokens(fact_text)) or "NONE"


def fe_lf(mf_text):
    return "\n".join(lexicon_terms(mf_text)) or "NONE"


def fa_mf(a, b):
    ta, tb = set(tokens(a)), set(tokens(b))
    union = ta | tb
    jaccard = 1.0 if not union else len(ta & tb) / len(union)
    return jaccard >= THRESHOLD


def fa_lf(a, b):
    return bool(set(lexicon_terms(a)) & set(lexicon_terms(b)))


def oracle_label(query_text, cand_text):
    mf_q, mf_c = fe_mf(query_text), fe_mf(cand_text)
    lf_q, lf_c = fe_lf(mf_q), fe_lf(mf_c)
    return int(fa_mf(mf_q, mf_c)) + 2 * int(fa_lf(lf_q, lf_c))


# ---------------------------------------------------------------------------
# Corpus

def fact_text(rng, fragments, term):
    name = rng.choice(SURNAMES) + "某"
    body = "，".join(fragments)
    return f"经审理查明，被告人{name}{rng.choice(TIMES)}，{body}。公诉机关指控其行为构成{term}罪。"


def make_cases(rng, queries, per_query):
    cases, pools, qrels = [], [], {}
    for qi in range(queries):
        frags = rng.sample(FRAGMENTS, 7)
        term = LEXICON[qi % len(LEXICON)]
        qid = f"q{qi + 1:02d}"
        cases.append({"id": qid, "fact_text": fact_text(rng, frags, term), "crime_tags": [term]})
        pool = []
        # Slots aim at labels 3,3,1,1,2,2,0,0,0,... before the oracle decides.
        plan = [3, 3, 1, 1, 2, 2] + [0] * (per_query - 6)
        for ci, aim in enumerate(plan):
            if aim in (1, 3):
                keep = rng.sample(frags, 6)
                cfrags = keep + rng.sample([f for f in FRAGMENTS if f not in frags], 1)
                rng.shuffle(cfrags)
            else:
                cfrags = rng.sample([f for f in FRAGMENTS if f not in frags], 7)
            cterm = term if aim in (2, 3) else rng.choice([t for t in LEXICON if t != term])
            cid = f"{qid}c{ci + 1:02d}"
            cases.append({"id": cid, "fact_text": fact_text(rng, cfrags, cterm), "crime_tags": [cterm]})
            pool.append(cid)
        pools.append({"query_id": qid, "candidate_ids": pool})
    by_id = {c["id"]: c for c in cases}
    for p in pools:
        q = by_id[p["query_id"]]["fact_text"]
        qrels[p["query_id"]] = {cid: oracle_label(q, by_id[cid]["fact_text"]) for cid in p["candidate_ids"]}
    return cases, pools, qrels


def make_demos(rng):
    demos = []
    for i in range(4):
        frags = rng.sample(FRAGMENTS, 5)
        term = LEXICON[(i * 5) % len(LEXICON)]
        text = fact_text(rng, frags, term)
        demos.append({"id": f"fe_mf_{i + 1}", "stage": "FE", "fact_type": "MF", "input_text": text,
                      "exemplar_output": "===FACTS===\n" + "；".join(frags) + "\n===END==="})
        demos.append({"id": f"fe_lf_{i + 1}", "stage": "FE", "fact_type": "LF", "input_text": "；".join(frags),
                      "exemplar_output": f"===FACTS===\n{term}\n===END==="})
    for ft in ("MF", "LF"):
        for i in range(4):
            polarity = "relevant" if i % 2 == 0 else "irrelevant"
            a = rng.sample(FRAGMENTS, 4)
            b = a[:3] + rng.sample(FRAGMENTS, 1) if polarity == "relevant" else rng.sample(FRAGMENTS, 4)
            if ft == "MF":
                inp = "案例甲：" + "，".join(a) + "\n案例乙：" + "，".join(b)
                why = "两案主要情节基本一致。" if polarity == "relevant" else "两案情节差异明显。"
            else:
                ta = LEXICON[i]
                tb = ta if polarity == "relevant" else LEXICON[i + 4]
                inp = f"案例甲：{ta}\n案例乙：{tb}"
                why = "两案法律评价相同。" if polarity == "relevant" else "两案法律评价不同。"
            verdict = "VERDICT: RELEVANT" if polarity == "relevant" else "VERDICT: IRRELEVANT"
            demos.append({"id": f"fa_{ft.lower()}_{i + 1}", "stage": "FA", "fact_type": ft, "polarity": polarity,
                          "input_text": inp, "exemplar_output": f"{why}\n{verdict}"})
    return demos


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "toy"))
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--queries", type=int, default=12)
    ap.add_argument("--per-query", type=int, default=10)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    cases, pools, qrels = make_cases(rng, args.queries, args.per_query)
    demos = make_demos(rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cases.jsonl", "w", encoding="utf-8") as f:
        for c in cases:
            f.write(json.dumps(c, ensure_ascii=False) + "\n")
    (out / "pools.json").write_text(json.dumps(pools, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    (out / "qrels.json").write_text(json.dumps(qrels, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    (out / "demos.json").write_text(json.dumps(demos, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    (out / "lexicon.txt").write_text("\n".join(LEXICON) + "\n", encoding="utf-8")

    hist = {}
    for row in qrels.values():
        for label in row.values():
            hist[label] = hist.get(label, 0) + 1
    print(json.dumps({"cases": len(cases), "pairs": sum(hist.values()),
                      "histogram": {k: hist[k] for k in sorted(hist)}}))


if __name__ == "__main__":
    main()
