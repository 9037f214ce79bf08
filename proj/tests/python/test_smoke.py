import json
import os
import subprocess
from pathlib import Path

import pytest

import casejudge as cj

DATA = Path(os.environ.get("CASEJUDGE_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))
TOY = DATA / "toy"


def test_tokenize_bigrams():
    assert cj.tokenize("盗窃罪") == ["盗窃", "窃罪"]
    assert cj.tokenize("a b", "whitespace") == ["a", "b"]


def test_bm25_ranks_matching_doc_first():
    ix = cj.Bm25Index([("d1", ["a", "b"]), ("d2", ["c"]), ("d3", ["a"])])
    assert ix.doc_count == 3
    top = ix.top_k(["a", "b"], 2)
    assert top[0][0] == "d1"
    assert top[0][1] == pytest.approx(ix.score(["a", "b"], "d1"))


def test_label_algebra():
    for mf in (False, True):
        for lf in (False, True):
            label = cj.aggregate_label(mf, lf)
            assert label == int(mf) + 2 * int(lf)
            assert cj.gold_fact_flags(label) == (mf, lf)


def test_kappa_fixture():
    k = cj.cohens_kappa([1, 1, 0, 0], [1, 0, 0, 0])
    assert k["kappa"] == pytest.approx(0.5, abs=1e-12)
    assert k["p_observed"] == pytest.approx(0.75)
    with pytest.raises(cj.CasejudgeError):
        cj.cohens_kappa([], [])


def test_ndcg_ideal_is_one():
    r = cj.ndcg_at_k({"q": [("a", 2.0), ("b", 1.0)]}, {"q": {"a": 3, "b": 1}}, 30)
    assert r["mean"] == 1.0


def test_quotas_and_sampling():
    assert cj.label_quotas(200, {0: 0.5, 1: 0.2, 2: 0.1, 3: 0.2}) == {0: 100, 1: 40, 2: 20, 3: 40}
    pairs = cj.sample_pairs(["a", "b", "c", "d"], 6, 1)
    assert sorted(pairs) == [("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "d")]


def test_mock_judge_pair():
    r = cj.mock_judge_pair("被告人深夜入户盗窃现金", "被告人深夜入户盗窃现金", str(TOY / "demos.json"), ["盗窃"])
    assert r["label"] == 3
    assert json.loads(r["record"])["label"] == 3


def test_run_cli_config():
    code, out, _ = cj.run_cli(["config", "--set", "judge.runs=4"])
    assert code == 0
    assert json.loads(out)["judge.runs"] == 4
    code, _, _ = cj.run_cli(["no-such-command"])
    assert code == 2


@pytest.mark.skipif(not os.environ.get("CASEJUDGE_CLI"), reason="CLI binary path not provided")
def test_cli_binary_judges_toy_corpus(tmp_path):
    out = tmp_path / "records.jsonl"
    cli = os.environ["CASEJUDGE_CLI"]
    subprocess.run(
        [cli, "judge", "--queries", str(TOY / "cases.jsonl"), "--pools", str(TOY / "pools.json"),
         "--out", str(out), "--runs", "1", "--mock", "--demos", str(TOY / "demos.json"),
         "--lexicon", str(TOY / "lexicon.txt")],
        check=True, capture_output=True)
    res = subprocess.run(
        [cli, "evaluate", "validity", "--in", str(out), "--qrels", str(TOY / "qrels.json")],
        check=True, capture_output=True, text=True)
    assert json.loads(res.stdout)["mean"]["kappa_4level"] == 1.0
