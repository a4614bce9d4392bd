"""Metrics against an independent counting oracle, the benchmark runner, and
report emission with the fixed reference rows."""

from __future__ import annotations

import csv
import json
import random

import pytest
from conftest import make_claim, make_config, scripted_engine, seed_cache, web_snippets
from hypothesis import given
from hypothesis import strategies as st

from stepcheck.core import SourceKind, Verdict
from stepcheck.corpus import LabeledClaim
from stepcheck.errors import LengthMismatch, RunFailed
from stepcheck.evaluation import (
    ConfusionCounts,
    Metrics,
    confusion,
    emit_report,
    load_reference_rows,
    precision_recall_f1,
    run_benchmark,
)
from stepcheck.evidence import EvidenceCache, Retriever
from stepcheck.gateway import Completion, Gateway

S = Verdict.SUPPORTED
R = Verdict.REFUTED


def oracle_metrics(preds, golds):
    """Independent brute-force implementation: bare counting loops."""
    tp = 0
    fp = 0
    fn = 0
    for i in range(len(preds)):
        if preds[i] is S and golds[i] is S:
            tp = tp + 1
        if preds[i] is S and golds[i] is R:
            fp = fp + 1
        if preds[i] is R and golds[i] is S:
            fn = fn + 1
    p = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    r = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f = (2 * p * r) / (p + r) if (p + r) > 0 else 0.0
    return p, r, f


class TestConfusion:
    def test_hand_enumerated_case(self):
        counts = confusion([S, S, R], [S, R, R])
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (1, 1, 0, 1)

    def test_identical_lists_have_no_errors(self):
        counts = confusion([S, R, S], [S, R, S])
        assert counts.fp == 0 and counts.fn == 0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([S, R], [S, R, R])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            confusion([], [])

    def test_counts_sum_to_total(self):
        rng = random.Random(3)
        preds = [rng.choice([S, R]) for _ in range(40)]
        golds = [rng.choice([S, R]) for _ in range(40)]
        assert confusion(preds, golds).total == 40


class TestPrecisionRecallF1:
    def test_two_thirds_case(self):
        metrics = precision_recall_f1(ConfusionCounts(tp=2, fp=1, fn=1, tn=0))
        assert metrics.precision == pytest.approx(0.6667, abs=1e-4)
        assert metrics.recall == pytest.approx(0.6667, abs=1e-4)
        assert metrics.f1 == pytest.approx(0.6667, abs=1e-4)

    def test_zero_denominators_give_zero(self):
        metrics = precision_recall_f1(ConfusionCounts(tp=0, fp=0, fn=0, tn=3))
        assert (metrics.precision, metrics.recall, metrics.f1) == (0.0, 0.0, 0.0)

    def test_perfect_prediction_gives_ones(self):
        metrics = precision_recall_f1(ConfusionCounts(tp=4, fp=0, fn=0, tn=2))
        assert (metrics.precision, metrics.recall, metrics.f1) == (1.0, 1.0, 1.0)

    def test_matches_oracle_on_1000_random_vectors(self):
        rng = random.Random(20240503)
        for _ in range(1000):
            n = rng.randint(1, 50)
            preds = [rng.choice([S, R]) for _ in range(n)]
            golds = [rng.choice([S, R]) for _ in range(n)]
            metrics = precision_recall_f1(confusion(preds, golds))
            p, r, f = oracle_metrics(preds, golds)
            assert abs(metrics.precision - p) <= 1e-12
            assert abs(metrics.recall - r) <= 1e-12
            assert abs(metrics.f1 - f) <= 1e-12

    @given(
        st.integers(min_value=0, max_value=50),
        st.integers(min_value=0, max_value=50),
        st.integers(min_value=0, max_value=50),
        st.integers(min_value=0, max_value=50),
    )
    def test_f1_lies_between_precision_and_recall(self, tp, fp, fn, tn):
        metrics = precision_recall_f1(ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn))
        assert 0.0 <= metrics.precision <= 1.0
        assert 0.0 <= metrics.recall <= 1.0
        assert 0.0 <= metrics.f1 <= 1.0
        if metrics.precision + metrics.recall > 0:
            assert metrics.f1 <= max(metrics.precision, metrics.recall) + 1e-12
            assert metrics.f1 >= min(metrics.precision, metrics.recall) - 1e-12


YES = "Prediction = Yes, we can know."
SUPPORTED = "The claim is [SUPPORTED].\nExplanation:\nok."
REFUTED = "The claim is [REFUTED].\nExplanation:\nno."


def three_claim_setup(tmp_path, middle_aborts=False):
    dataset = [
        LabeledClaim(make_claim("Claim alpha is true.", "a"), S),
        LabeledClaim(make_claim("Claim beta is true.", "b"), R),
        LabeledClaim(make_claim("Claim gamma is true.", "c"), R),
    ]
    script = ["Question = Is alpha real?", "Summary a.", YES, SUPPORTED]
    if middle_aborts:
        script += ["not a question at all"]
    else:
        script += ["Question = Is beta real?", "Summary b.", YES, SUPPORTED]
    script += ["Question = Is gamma real?", "Summary c.", YES, REFUTED]
    setup = scripted_engine(tmp_path, script)
    for question in ("Is alpha real?", "Is beta real?", "Is gamma real?"):
        seed_cache(setup.cache, setup.config, question, web_snippets([f"about {question}"]))
    return dataset, setup


class TestRunBenchmark:
    def test_three_scripted_claims_score_exactly(self, tmp_path):
        dataset, setup = three_claim_setup(tmp_path)
        result = run_benchmark(
            dataset, setup.config, gateway=setup.gateway, retriever=setup.retriever
        )
        # preds S,S,R vs golds S,R,R: tp=1 fp=1 tn=1.
        assert result.metrics.precision == pytest.approx(0.5)
        assert result.metrics.recall == pytest.approx(1.0)
        assert result.metrics.f1 == pytest.approx(2 / 3)
        assert result.completed == 3
        assert result.failures == ()

    def test_aborted_claims_excluded_and_reported(self, tmp_path):
        dataset, setup = three_claim_setup(tmp_path, middle_aborts=True)
        result = run_benchmark(
            dataset, setup.config, gateway=setup.gateway, retriever=setup.retriever
        )
        assert result.completed == 2
        assert len(result.failures) == 1
        assert result.failures[0].claim_id == "b"
        # Metrics cover the two completed claims: preds S,R vs golds S,R.
        assert result.metrics.f1 == pytest.approx(1.0)

    def test_empty_dataset_rejected(self, tmp_path):
        _, setup = three_claim_setup(tmp_path)
        with pytest.raises(ValueError):
            run_benchmark([], setup.config, gateway=setup.gateway, retriever=setup.retriever)

    def test_duplicate_claim_ids_rejected(self, tmp_path):
        dataset, setup = three_claim_setup(tmp_path)
        duplicated = [dataset[0], dataset[0]]
        with pytest.raises(ValueError):
            run_benchmark(
                duplicated, setup.config, gateway=setup.gateway, retriever=setup.retriever
            )

    def test_all_aborting_is_fatal(self, tmp_path):
        dataset = [LabeledClaim(make_claim("Only claim.", "solo"), S)]
        setup = scripted_engine(tmp_path, ["junk with no question"])
        with pytest.raises(RunFailed):
            run_benchmark(
                dataset, setup.config, gateway=setup.gateway, retriever=setup.retriever
            )

    def test_fully_warmed_cache_needs_zero_network_operations(self, tmp_path):
        from conftest import CannedSearch

        dataset, setup = three_claim_setup(tmp_path)
        counting = CannedSearch()
        retriever = Retriever(setup.config, setup.cache, search=counting)
        run_benchmark(dataset, setup.config, gateway=setup.gateway, retriever=retriever)
        assert counting.calls == 0

    def test_out_dir_gets_traces_manifest_failures(self, tmp_path):
        dataset, setup = three_claim_setup(tmp_path)
        out_dir = tmp_path / "run-out"
        run_benchmark(
            dataset,
            setup.config,
            gateway=setup.gateway,
            retriever=setup.retriever,
            out_dir=out_dir,
        )
        assert (out_dir / "traces.jsonl").read_text(encoding="utf-8").count("\n") == 3
        manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["completed"] == 3
        assert json.loads((out_dir / "failures.json").read_text(encoding="utf-8")) == []


class RuleBackend:
    """Deterministic per-claim answers derived from the prompt, safe for
    concurrent use; lets benchmark tests run without scripts."""

    deterministic = False

    def send(self, request, model_name):
        prompt = request.prompt
        if request.role.value == "question_gen":
            claim_line = [l for l in prompt.splitlines() if l.startswith("Claim = ")][-1]
            return Completion(text=f"Question = Is it so that {claim_line[8:]}?", model_name=model_name)
        if request.role.value == "summarizer":
            return Completion(text="A direct answer.", model_name=model_name)
        if prompt.endswith("Prediction ="):
            return Completion(text="Prediction = Yes, we can know.", model_name=model_name)
        claim_text = prompt[prompt.rindex("Is it true that ") + len("Is it true that "):]
        claim_text = claim_text.split("?\n")[0]
        label = "[SUPPORTED]" if len(claim_text) % 2 == 0 else "[REFUTED]"
        return Completion(text=f"The claim is {label}.\nExplanation:\nrule.", model_name=model_name)


def rule_setup(tmp_path, claims, concurrency=4):
    config = make_config(
        tmp_path, source_kind=SourceKind.INTERNAL, concurrency_limit=concurrency
    )
    gateway = Gateway(RuleBackend(), config)
    retriever = Retriever(config, EvidenceCache(config.cache_dir), gateway=gateway)
    return config, gateway, retriever


class TestRunBenchmarkConcurrency:
    def claims(self, n):
        return [
            LabeledClaim(make_claim(f"Concurrent claim number {i}.", f"cc-{i}"), S if i % 2 else R)
            for i in range(n)
        ]

    def test_traces_aggregate_in_dataset_order(self, tmp_path):
        dataset = self.claims(8)
        config, gateway, retriever = rule_setup(tmp_path, dataset)
        result = run_benchmark(dataset, config, gateway=gateway, retriever=retriever)
        assert [t.claim.id for t in result.traces] == [c.claim.id for c in dataset]

    def test_metrics_invariant_under_permutation(self, tmp_path):
        dataset = self.claims(9)
        config, gateway, retriever = rule_setup(tmp_path, dataset)
        straight = run_benchmark(dataset, config, gateway=gateway, retriever=retriever)
        shuffled = dataset[:]
        random.Random(11).shuffle(shuffled)
        permuted = run_benchmark(shuffled, config, gateway=gateway, retriever=retriever)
        assert straight.metrics == permuted.metrics


class TestReports:
    def test_single_row_marked_best(self, tmp_path):
        txt_path, csv_path = emit_report(
            [("my-run", Metrics(precision=0.5, recall=0.5, f1=0.5))],
            tmp_path / "report",
            dataset="generic",
            include_reference=False,
        )
        rows = list(csv.DictReader(csv_path.open(encoding="utf-8")))
        assert len(rows) == 1
        assert rows[0]["best"] == "yes"
        assert "positive class: Supported" in txt_path.read_text(encoding="utf-8")

    def test_reference_rows_ship_expected_constants(self):
        rows = {(r.label, r.dataset): r for r in load_reference_rows()}
        wiki = rows[("three-part pipeline (wikipedia)", "healthfc")]
        assert (wiki.precision_pct, wiki.recall_pct, wiki.f1_pct) == (65.2, 92.6, 76.5)
        gpt_web = {
            dataset: rows[("gpt-4o-mini step-by-step (web)", dataset)].f1_pct
            for dataset in ("healthfc", "covert", "scifact")
        }
        assert gpt_web == {"healthfc": 79.6, "covert": 85.9, "scifact": 87.6}

    def test_report_includes_reference_rows(self, tmp_path):
        _, csv_path = emit_report(
            [("my-run", Metrics(precision=0.9, recall=0.9, f1=0.9))],
            tmp_path / "report",
            dataset="healthfc",
        )
        rows = list(csv.DictReader(csv_path.open(encoding="utf-8")))
        assert len(rows) == 1 + 33
        by_key = {(r["system"], r["dataset"]): r for r in rows}
        assert by_key[("three-part pipeline (wikipedia)", "healthfc")]["f1"] == "76.5"
        # 90.0 beats every reported healthfc F1, so the run row is marked best.
        assert by_key[("my-run", "healthfc")]["best"] == "yes"

    def test_best_marking_is_per_dataset(self, tmp_path):
        _, csv_path = emit_report(
            [("weak-run", Metrics(precision=0.1, recall=0.1, f1=0.1))],
            tmp_path / "report",
            dataset="scifact",
        )
        rows = list(csv.DictReader(csv_path.open(encoding="utf-8")))
        best_scifact = [r for r in rows if r["dataset"] == "scifact" and r["best"] == "yes"]
        assert [r["system"] for r in best_scifact] == ["gpt-4o-mini step-by-step (web)"]

    def test_empty_results_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], tmp_path / "report")
