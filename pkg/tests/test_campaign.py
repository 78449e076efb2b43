import json

import pytest

from conftest import FIXTURES, POSITIVE
from reflectfuzz.campaign import (
    SCHEMA_VERSION,
    BackendConfig,
    CampaignConfig,
    CorpusError,
    emit_report,
    load_report,
    replay,
    report_text,
    round_histogram,
    run_campaign,
    strip_timing,
)
from reflectfuzz.crp import CrpConfig


def campaign(*names, **kw):
    return run_campaign(CampaignConfig(tuple(str(FIXTURES / f"{n}.json") for n in names), **kw))


def test_crowdsale_campaign():
    report = campaign("crowdsale")
    (c,) = report.contracts
    assert c.status == "vulnerability_found" and c.primary == "EL" and c.rounds <= 10
    doc = report.to_dict()
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["contracts"][0]["found_classes"] == [{"class": "EL", "severity": "High"}]
    assert "Crowdsale.withdraw" in doc["contracts"][0]["location"]
    assert c.replay_confirmed


def test_empty_corpus(tmp_path):
    with pytest.raises(CorpusError):
        run_campaign(CampaignConfig((str(tmp_path),)))


def test_unloadable_file_is_reported(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "Bad", "storage": [], "functions": [{"descriptor": {"name": "f"}, "body": [{"stmt": "nope"}]}]}')
    report = run_campaign(CampaignConfig((str(bad), str(FIXTURES / "sc_positive.json"))))
    assert [p for p, _ in report.errors] == [str(bad)]
    assert [c.name for c in report.contracts] == ["OpenKill"]
    with pytest.raises(CorpusError) as err:
        run_campaign(CampaignConfig((str(bad),)))
    assert err.value.errors


def test_positive_diagonal_counts():
    report = campaign(*POSITIVE.values())
    assert report.class_counts() == {cls: 1 for cls in ["EL", "SC", "RE", "UD", "UE", "BD", "TO", "EF"]}


def test_totals_are_sums():
    report = run_campaign(CampaignConfig((str(FIXTURES),)))
    doc = report.to_dict()
    for cls, n in doc["totals"]["per_class"].items():
        assert n == sum(any(f["class"] == cls for f in c["found_classes"]) for c in doc["contracts"])
    assert sum(doc["totals"]["statuses"].values()) == len(doc["contracts"])
    assert sum(doc["totals"]["round_histogram"].values()) == len(report.found)
    series = doc["totals"]["detection_series"]
    assert [d["cumulative"] for d in series] == list(range(1, len(report.found) + 1))


def test_round_histogram():
    assert round_histogram([3, 3, 5]) == {3: 2, 5: 1}


def test_emit_is_idempotent(tmp_path):
    report = campaign("crowdsale", "sc_positive")
    first = {p.name: p.read_bytes() for p in emit_report(report, tmp_path / "r")}
    second = {p.name: p.read_bytes() for p in emit_report(report, tmp_path / "r")}
    assert first == second
    assert set(first) == {"r.json", "r.csv", "r.detections.csv", "r.rounds.csv"}


def test_single_contract_summary_row(tmp_path):
    paths = emit_report(campaign("crowdsale"), tmp_path / "one")
    summary = next(p for p in paths if p.name == "one.csv").read_text().splitlines()
    assert len(summary) == 2 and summary[1].startswith("Crowdsale,vulnerability_found,EL")


def test_replay_closure(tmp_path):
    report = run_campaign(CampaignConfig((str(FIXTURES),)))
    emit_report(report, tmp_path / "all")
    doc = load_report(tmp_path / "all")
    assert report.found
    for c in report.found:
        ok, classes, reported = replay(doc, c.name)
        assert ok and reported in classes


def test_budget_monotonicity():
    def attempted(budget):
        ticks = iter(range(10_000))
        report = run_campaign(CampaignConfig((str(FIXTURES),), total_budget=budget), clock=lambda: next(ticks))
        return report.to_dict()["totals"]["attempted"]

    counts = [attempted(b) for b in (40, 20, 10, 5, 2.5, 1.25)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[-1] < counts[0]


def test_jobs_do_not_change_results():
    one = run_campaign(CampaignConfig((str(FIXTURES),), jobs=1)).to_dict()
    four = run_campaign(CampaignConfig((str(FIXTURES),), jobs=4)).to_dict()
    one["config"].pop("jobs"), four["config"].pop("jobs")
    assert json.dumps(strip_timing(one), sort_keys=True) == json.dumps(strip_timing(four), sort_keys=True)


def test_deterministic_documents():
    cfg = CampaignConfig((str(FIXTURES),), crp=CrpConfig(rng_seed=3))
    a, b = run_campaign(cfg).to_dict(), run_campaign(cfg).to_dict()
    assert json.dumps(strip_timing(a), sort_keys=True) == json.dumps(strip_timing(b), sort_keys=True)


@pytest.mark.parametrize("kw", [
    dict(total_budget=0),
    dict(jobs=0),
    dict(backend=BackendConfig("llm")),
    dict(crp=CrpConfig(per_contract_budget=-1)),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CampaignConfig((str(FIXTURES),), **kw)


def test_empty_corpus_config():
    with pytest.raises(ValueError):
        CampaignConfig(())


def test_report_text_ends_with_newline():
    assert report_text(campaign("sc_positive")).endswith("}\n")
