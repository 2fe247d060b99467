import json
import math
import os
from pathlib import Path

import pytest

import vulnlink

DATA = Path(os.environ.get("VULNLINK_TEST_DATA", Path(__file__).resolve().parents[2] / "tests" / "data"))
DEMO = str(DATA / "demo_corpus.jsonl")
PATH_HIJACK = str(DATA / "path_hijack.jsonl")


def test_corpus_and_annotation_chain():
    corpus = vulnlink.Corpus.load(PATH_HIJACK)
    assert len(corpus) == 4
    got = vulnlink.annotate(corpus, "T1574.007")
    assert got["cves"] == ["CVE-2022-4826"]
    chain = got["chains"]["CVE-2022-4826"][0]
    assert chain[0] == "T1574.007" and chain[-1] == "CVE-2022-4826"
    assert "CAPEC-38" in chain
    truth = vulnlink.annotate_all(corpus)
    assert truth["T1574.007"] == ["CVE-2022-4826"]


def test_unknown_entry_raises_with_code():
    corpus = vulnlink.Corpus.load(PATH_HIJACK)
    with pytest.raises(vulnlink.VulnlinkError) as info:
        vulnlink.annotate(corpus, "T9999")
    assert info.value.code == "lookup"


def test_cleaning_and_cve_extraction():
    text, report = vulnlink.clean_text("See <b>CVE-2021-44228</b> (Citation: Vendor) http://x.test/a")
    assert "<b>" not in text and "http" not in text and "Citation" not in text
    assert report["removed_urls"] == 1
    assert vulnlink.extract_cve_ids("cve-2021-44228 and CVE-2020-0601") == ["CVE-2021-44228", "CVE-2020-0601"]


def test_embedding_cosine_and_ranking():
    a = vulnlink.test_embed("steal session cookie", 64)
    b = vulnlink.test_embed("steal cookie", 64)
    assert math.isclose(vulnlink.cosine(a, b), 2 / math.sqrt(6), abs_tol=1e-7)
    store = vulnlink.EmbeddingStore("test:64", 64)
    store.put("CVE-2021-0001", b)
    store.put("CVE-2021-0002", vulnlink.test_embed("kernel driver load", 64))
    ranking = store.rank(a)
    assert [cve for cve, _ in ranking] == ["CVE-2021-0001", "CVE-2021-0002"]
    assert math.isclose(ranking[0][1], 2 / math.sqrt(6), abs_tol=1e-7)


def test_store_round_trip(tmp_path):
    store = vulnlink.EmbeddingStore("test:8", 8)
    store.put("CVE-2021-0001", vulnlink.test_embed("alpha beta", 8))
    path = str(tmp_path / "store.vlvs")
    store.save(path)
    back = vulnlink.EmbeddingStore.load(path)
    assert len(back) == 1 and back.dim == 8 and back.provider == "test:8"
    assert back.get("CVE-2021-0001") == store.get("CVE-2021-0001")


def test_predict_cut_and_metrics():
    ranking = [("CVE-2020-0001", 0.70), ("CVE-2020-0002", 0.55), ("CVE-2020-0003", 0.61)]
    kept = vulnlink.predict(ranking, rho=58)
    assert [cve for cve, _ in kept] == ["CVE-2020-0001", "CVE-2020-0003"]
    assert len(vulnlink.predict(ranking, rho=58, k=1)) == 1
    assert math.isclose(vulnlink.f1_score(0.84, 0.947), 0.89029, abs_tol=1e-4)
    assert vulnlink.prf(1, 1, 1)["precision"] == 0.5
    o = vulnlink.overlap(["CVE-2020-0001", "CVE-2020-0002", "CVE-2020-0003"],
                         ["CVE-2020-0002", "CVE-2020-0003", "CVE-2020-0004"])
    assert math.isclose(o["jaccard"], 0.5)


def test_sweeps_on_separable_fixture():
    rankings = {
        "T1000": [("CVE-2020-0001", 0.9)],
        "T1001": [("CVE-2020-0002", 0.2)],
    }
    truth = {"T1000": ["CVE-2020-0001"], "T1001": []}
    roc = vulnlink.roc_sweep(rankings, truth)
    assert roc["auc"] == pytest.approx(1.0)
    assert len(roc["curve"]) == 100
    pr = vulnlink.pr_sweep(rankings, truth)
    assert 1 <= pr["eer_rho"] <= 100
    top = vulnlink.topk_sweep(rankings, truth, [1, 2])
    assert [p["k"] for p in top["points"]] == [1, 2]


def test_pipeline_and_service(tmp_path):
    out = str(tmp_path / "run")
    summaries = vulnlink.run_pipeline(DEMO, out, provider="test:64")
    assert [s["stage"] for s in summaries] == list(vulnlink.STAGES)
    assert len({s["config_digest"] for s in summaries}) == 1
    assert 0.0 <= summaries[4]["summary"]["auc"] <= 1.0

    service = vulnlink.Service([DEMO], out, provider="test:64", reviewer_token="tok")
    status, body, _ = service.handle("GET", "/health")
    assert status == 200
    status, body, _ = service.handle("POST", "/predict", json.dumps({"text": "steal web session cookie", "k": 3}))
    assert status == 200 and len(json.loads(body)["items"]) <= 3
    status, body, _ = service.handle("GET", "/calibration")
    assert status == 200 and "calibration" in json.loads(body)
    status, body, _ = service.handle("GET", "/queue")
    assert status == 200 and "pending" in json.loads(body)
    status, _, _ = service.handle("POST", "/verdict", "{}")
    assert status == 401
    status, body, content_type = service.handle("GET", "/enrichment")
    assert status == 200 and content_type == "application/x-ndjson"


def test_missing_stage_artifact_raises(tmp_path):
    with pytest.raises(vulnlink.VulnlinkError) as info:
        vulnlink.run_stage("evaluate", [DEMO], str(tmp_path / "empty"))
    assert info.value.code == "dependency"
