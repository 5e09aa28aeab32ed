import math

import numpy as np
import pytest

from mmfuse.classifier import ClassifierConfig
from mmfuse.errors import ArgumentError, SearchError
from mmfuse.hypersearch import (
    GAMMA,
    N_STARTUP,
    SEARCH_SPACE,
    ChoiceParam,
    FloatParam,
    TrialRecord,
    load_trial_log,
    run_search,
    sample_config,
)

INPUT_DIM = 64


def domain_of(name):
    return next(p for p in SEARCH_SPACE if p.name == name)


def assert_in_domain(cfg: ClassifierConfig):
    for p in SEARCH_SPACE:
        value = getattr(cfg, p.name)
        if isinstance(p, FloatParam):
            assert p.low <= value <= p.high, f"{p.name}={value}"
        else:
            assert value in p.values, f"{p.name}={value}"


class TestSampling:
    def test_prior_sample_in_domain(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            cfg = sample_config(SEARCH_SPACE, [], rng, INPUT_DIM)
            assert_in_domain(cfg)
            cfg.validate()

    def test_deterministic_given_seed_and_history(self):
        history = [
            TrialRecord(i, sample_config(SEARCH_SPACE, [], np.random.default_rng(i), INPUT_DIM).to_dict(),
                        0.5 + 0.01 * i, "completed")
            for i in range(30)
        ]
        a = sample_config(SEARCH_SPACE, history, np.random.default_rng(42), INPUT_DIM)
        b = sample_config(SEARCH_SPACE, history, np.random.default_rng(42), INPUT_DIM)
        assert a == b

    def test_tpe_concentrates_on_good_region(self):
        # After 100 trials where only num_layers=2 ever lands in the best
        # quartile, most TPE samples should choose num_layers=2.
        rng = np.random.default_rng(1)
        history = []
        for i in range(100):
            cfg = sample_config(SEARCH_SPACE, [], rng, INPUT_DIM)
            d = cfg.to_dict()
            if i < 30:
                d["num_layers"] = 2
                loss = 0.1 + 0.001 * i
            else:
                d["num_layers"] = int(rng.choice([1, 3, 4]))
                loss = 1.0 + 0.01 * i
            history.append(TrialRecord(i, d, loss, "completed"))
        picks = [
            sample_config(SEARCH_SPACE, history, np.random.default_rng([7, t]), INPUT_DIM).num_layers
            for t in range(50)
        ]
        assert sum(p == 2 for p in picks) >= 30  # >= 60%

    def test_startup_phase_is_prior(self):
        history = [
            TrialRecord(i, sample_config(SEARCH_SPACE, [], np.random.default_rng(i), INPUT_DIM).to_dict(),
                        1.0, "completed")
            for i in range(N_STARTUP - 1)
        ]
        # below the startup threshold the history must not influence sampling
        a = sample_config(SEARCH_SPACE, history, np.random.default_rng(3), INPUT_DIM)
        b = sample_config(SEARCH_SPACE, [], np.random.default_rng(3), INPUT_DIM)
        assert a == b

    def test_empty_domain_rejected(self):
        from mmfuse.errors import ConfigError
        with pytest.raises(ConfigError):
            sample_config((ChoiceParam("num_heads", ()),), [], np.random.default_rng(0), INPUT_DIM)

    def test_divisibility_always_satisfied(self):
        # input widths that defeat some head counts force resampling
        rng = np.random.default_rng(2)
        for dim in (36, 100, 20):
            for _ in range(20):
                cfg = sample_config(SEARCH_SPACE, [], rng, dim)
                assert cfg.width % cfg.num_heads == 0


def quadratic_objective(cfg: ClassifierConfig) -> float:
    return (math.log(cfg.learning_rate) - math.log(1e-3)) ** 2


class TestRunSearch:
    def test_budget_one(self):
        result = run_search(quadratic_objective, INPUT_DIM, budget=1, seed=0)
        assert len(result.records) == 1
        assert result.best_record.trial_id == 0

    def test_rerun_identical(self, tmp_path):
        a = run_search(quadratic_objective, INPUT_DIM, budget=25, seed=3,
                       log_path=tmp_path / "a.jsonl")
        b = run_search(quadratic_objective, INPUT_DIM, budget=25, seed=3,
                       log_path=tmp_path / "b.jsonl")
        assert [r.to_json() for r in a.records] == [r.to_json() for r in b.records]
        assert (tmp_path / "a.jsonl").read_text() == (tmp_path / "b.jsonl").read_text()

    def test_prefix_property(self, tmp_path):
        short = run_search(quadratic_objective, INPUT_DIM, budget=25, seed=4)
        long = run_search(quadratic_objective, INPUT_DIM, budget=40, seed=4)
        assert [r.to_json() for r in long.records[:25]] == [r.to_json() for r in short.records]
        best_so_far = math.inf
        prefix_best = []
        for r in long.records:
            if r.status == "completed":
                best_so_far = min(best_so_far, r.loss)
            prefix_best.append(best_so_far)
        assert all(a >= b for a, b in zip(prefix_best, prefix_best[1:]))

    def test_resume_from_log(self, tmp_path):
        log = tmp_path / "trials.jsonl"
        run_search(quadratic_objective, INPUT_DIM, budget=10, seed=5, log_path=log)
        assert len(load_trial_log(log)) == 10
        resumed = run_search(quadratic_objective, INPUT_DIM, budget=30, seed=5, log_path=log)
        assert len(resumed.records) == 30
        fresh = run_search(quadratic_objective, INPUT_DIM, budget=30, seed=5)
        assert [r.to_json() for r in resumed.records] == [r.to_json() for r in fresh.records]

    def test_tpe_beats_random_on_quadratic(self):
        tpe = run_search(quadratic_objective, INPUT_DIM, budget=150, seed=6)
        random_losses = []
        for t in range(150):
            rng = np.random.default_rng([6, 99, t])
            cfg = sample_config(SEARCH_SPACE, [], rng, INPUT_DIM)
            random_losses.append(quadratic_objective(cfg))
        tpe_best = tpe.best_record.loss
        assert tpe_best <= min(random_losses)
        # best lr lands within the top decile of prior mass around the optimum
        lr = ClassifierConfig.from_dict(tpe.best_record.config).learning_rate
        log_range = math.log(1e-2) - math.log(1e-5)
        assert abs(math.log(lr) - math.log(1e-3)) <= 0.05 * log_range

    def test_failed_trials_recorded(self):
        def flaky(cfg: ClassifierConfig) -> float:
            if cfg.num_layers >= 3:
                raise RuntimeError("boom")
            return quadratic_objective(cfg)

        result = run_search(flaky, INPUT_DIM, budget=40, seed=7)
        statuses = {r.status for r in result.records}
        assert "failed" in statuses and "completed" in statuses
        assert all(math.isinf(r.loss) for r in result.records if r.status == "failed")
        assert result.best_record.status == "completed"

    def test_all_failed_raises(self):
        def always_fail(cfg):
            raise RuntimeError("no")

        with pytest.raises(SearchError):
            run_search(always_fail, INPUT_DIM, budget=5, seed=8)

    def test_bad_budget(self):
        with pytest.raises(ArgumentError):
            run_search(quadratic_objective, INPUT_DIM, budget=0, seed=0)

    def test_overrides_apply(self):
        result = run_search(quadratic_objective, INPUT_DIM, budget=3, seed=9,
                            overrides={"max_epochs": 7, "patience": 2})
        for r in result.records:
            assert r.config["max_epochs"] == 7
            assert r.config["patience"] == 2

    def test_log_round_trip(self, tmp_path):
        log = tmp_path / "t.jsonl"
        result = run_search(quadratic_objective, INPUT_DIM, budget=5, seed=10, log_path=log)
        back = load_trial_log(log)
        assert [r.to_json() for r in back] == [r.to_json() for r in result.records]


def test_gamma_and_startup_constants():
    assert N_STARTUP == 20
    assert GAMMA == 0.25
