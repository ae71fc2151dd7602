import ast
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bbaudio.attack as attack_mod
from bbaudio.attack import (GENETIC, GRADIENT, AttackAborted, AttackConfig, SparseGradient,
                            crossover, estimate_gradient, gradient_step, initialize_population,
                            momentum_update, mutate, run_attack, select_parent, softmax_probs)
from bbaudio.audio_io import AudioBuffer
from bbaudio.dsp import NoiseConfig, apply_filter, design_highpass, sample_noise
from bbaudio.metrics import levenshtein
from bbaudio.scenario import speech_like_clip
from bbaudio.victim import OracleError, OracleResponse, ToyVictim, ToyVictimParams

HP = design_highpass(16000, 7000)


class QuadraticOracle:
    """score(x) = -sum((x - c)**2); transcript is always empty."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)
        self.calls = 0

    def score(self, audio, target):
        self.calls += 1
        return OracleResponse(float(np.sum((audio.samples - self.c) ** 2)), "")


class CountingOracle:
    """Pass-through that counts scored clips; optionally hides score_batch."""

    def __init__(self, inner, batch=True):
        self.inner = inner
        self.calls = 0
        if batch:
            self.score_batch = self._score_batch

    def score(self, audio, target):
        self.calls += 1
        return self.inner.score(audio, target)

    def _score_batch(self, audios, target):
        self.calls += len(audios)
        return self.inner.score_batch(audios, target)


def small_scenario():
    victim = ToyVictim(ToyVictimParams(seed=4))
    x = speech_like_clip(4, duration=0.2)
    cfg = AttackConfig(seed=4, population_size=8, max_iters=300, noise=NoiseConfig(sigma=300.0),
                       fd_indices=20, fd_step=3e8)
    return victim, x, "abc", cfg


@pytest.fixture(scope="module")
def small_run():
    victim, x, target, cfg = small_scenario()
    counter = CountingOracle(victim)
    per_gen = []

    def hook(rec):
        per_gen.append(counter.calls)

    result = run_attack(x, target, counter, cfg, on_generation=hook)
    return result, np.diff([1] + per_gen), cfg


class TestConfig:
    def test_defaults(self):
        c = AttackConfig()
        assert (c.population_size, c.max_iters, c.elite_frac, c.phase_switch_edit_distance) == (100, 3000, 0.1, 2)
        assert (c.mutation_p_init, c.alpha, c.beta, c.p_max) == (0.005, 0.99, 0.001, 0.1)
        assert (c.noise.mu, c.noise.sigma) == (0.0, 40.0)
        assert (c.fd_indices, c.fd_delta, c.fd_step) == (100, 1.0, 1.0)

    @pytest.mark.parametrize("kw", [dict(elite_frac=0), dict(elite_frac=1.5), dict(population_size=1),
                                    dict(mutation_p_init=0.2), dict(p_max=1.5), dict(alpha=1.0),
                                    dict(beta=0), dict(fd_delta=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AttackConfig(**kw)

    def test_elite_size_is_ceiling(self):
        assert AttackConfig(population_size=15, elite_frac=0.1).elite_size == 2
        assert AttackConfig(population_size=100).elite_size == 10

    def test_dict_roundtrip(self):
        c = AttackConfig(seed=7, noise=NoiseConfig(sigma=3.0))
        assert AttackConfig.from_dict(c.to_dict()) == c

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            AttackConfig.from_dict({"populationSize": 4})


class TestPopulation:
    def test_copies(self):
        x = AudioBuffer(np.arange(10.0))
        pop = initialize_population(x, 5)
        assert len(pop) == 5 and all(m == x for m in pop.members)
        pop.members[0].samples[0] = 99
        assert pop.members[1].samples[0] == 0 and x.samples[0] == 0

    def test_too_small(self):
        with pytest.raises(ValueError):
            initialize_population(AudioBuffer(np.zeros(4)), 1)


class TestSelectParent:
    def test_single(self):
        rng = np.random.default_rng(0)
        assert all(select_parent([-3.0], rng) == 0 for _ in range(20))

    def test_equal_scores(self):
        rng = np.random.default_rng(1)
        n = 10000
        hits = sum(select_parent([2.0, 2.0], rng) == 0 for _ in range(n))
        assert abs(hits - n / 2) <= 3 * math.sqrt(n / 4)

    def test_dominant(self):
        rng = np.random.default_rng(2)
        hits = sum(select_parent([10.0, 0.0], rng) == 0 for _ in range(10000))
        assert hits / 10000 >= 0.999

    def test_neg_inf(self):
        assert softmax_probs([-math.inf, 0.0]).tolist() == [0.0, 1.0]
        assert softmax_probs([-math.inf, -math.inf]).tolist() == [0.5, 0.5]

    def test_large_scores_stable(self):
        p = softmax_probs([-1e6, -1e6 - 1])
        assert p[0] == pytest.approx(1 / (1 + math.exp(-1)))

    def test_empty(self):
        with pytest.raises(ValueError):
            select_parent([], np.random.default_rng(0))


class TestCrossover:
    def test_same_parents(self):
        x = AudioBuffer(np.arange(50.0))
        assert crossover(x, x, np.random.default_rng(0)) == x

    def test_mask_and_balance(self):
        n = 10 ** 5
        a = AudioBuffer(np.zeros(n))
        b = AudioBuffer(np.ones(n))
        child = crossover(a, b, np.random.default_rng(3)).samples
        assert set(np.unique(child)) <= {0.0, 1.0}
        frac = np.mean(child == 0)
        assert 0.45 <= frac <= 0.55
        assert abs(frac - 0.5) <= 5 * math.sqrt(0.25 / n)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            crossover(AudioBuffer(np.zeros(3)), AudioBuffer(np.zeros(4)), np.random.default_rng(0))


class TestMutate:
    def test_p_zero(self):
        x = AudioBuffer(np.arange(100.0))
        assert mutate(x, 0.0, NoiseConfig(sigma=10), HP, np.random.default_rng(0)) == x

    def test_p_one_adds_filtered_noise(self):
        x = AudioBuffer(np.arange(100.0))
        cfg = NoiseConfig(sigma=10)
        y = mutate(x, 1.0, cfg, HP, np.random.default_rng(5))
        expected = x.samples + apply_filter(HP, sample_noise(100, cfg, np.random.default_rng(5)))
        np.testing.assert_array_equal(y.samples, expected)

    def test_fraction(self):
        n = 10 ** 5
        y = mutate(AudioBuffer(np.zeros(n)), 0.1, NoiseConfig(sigma=10), HP, np.random.default_rng(6))
        assert 0.09 <= np.mean(y.samples != 0) <= 0.11

    def test_bad_p(self):
        with pytest.raises(ValueError):
            mutate(AudioBuffer(np.zeros(4)), 1.5, NoiseConfig(), HP, np.random.default_rng(0))


class TestMomentum:
    def test_worked_example(self):
        assert momentum_update(0.005, [10.0, 3.0], [0.0], 0.99, 0.001, 0.1) == pytest.approx(0.00505, abs=1e-15)

    def test_plateau(self):
        assert momentum_update(0.005, [1.0], [1.0], 0.99, 0.001, 0.1) == 0.1
        assert momentum_update(0.005, [-math.inf], [-math.inf], 0.99, 0.001, 0.1) == 0.1

    def test_large_jump(self):
        assert momentum_update(0.005, [1e6], [0.0], 0.99, 0.001, 0.1) == pytest.approx(0.00495, rel=1e-6)

    def test_uses_maxima(self):
        assert momentum_update(0.0, [-5.0, -1.0], [-3.0, -2.0], 0.5, 0.002, 1.0) == pytest.approx(0.002)

    def test_empty(self):
        with pytest.raises(ValueError):
            momentum_update(0.1, [], [1.0], 0.9, 0.1, 0.5)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0, 1), st.floats(-1e9, 1e9), st.floats(-1e9, 1e9),
           st.floats(0, 0.999), st.floats(1e-9, 10), st.floats(0, 1))
    def test_bounded(self, p_old, a, b, alpha, beta, p_max):
        p = momentum_update(min(p_old, p_max), [a], [b], alpha, beta, p_max)
        assert 0.0 <= p <= p_max


class TestGradient:
    def test_quadratic_relative_error(self):
        rng = np.random.default_rng(0)
        n = 500
        c = rng.normal(scale=100, size=n)
        offsets = rng.uniform(1, 10, size=n) * rng.choice([-1, 1], size=n)
        x = AudioBuffer(c + offsets)
        oracle = QuadraticOracle(c)
        idx = rng.choice(n, size=100, replace=False)
        g = estimate_gradient(x, oracle, "a", idx, 1e-3)
        analytic = -2 * offsets[g.indices]
        assert np.max(np.abs(g.values - analytic) / np.abs(analytic)) <= 1e-3
        assert oracle.calls == 101

    def test_base_score_reused(self):
        oracle = QuadraticOracle(np.zeros(10))
        x = AudioBuffer(np.ones(10))
        estimate_gradient(x, oracle, "a", [1, 2, 3], 0.1, base_score=oracle.score(x, "a").score)
        assert oracle.calls == 4

    def test_sparse_support(self):
        x = AudioBuffer(np.ones(30))
        g = estimate_gradient(x, QuadraticOracle(np.zeros(30)), "a", [4, 9], 1e-3)
        dense = g.to_dense()
        assert np.flatnonzero(dense).tolist() == [4, 9]

    def test_constant_coordinate_is_zero(self):
        victim = ToyVictim(ToyVictimParams(seed=0))
        x = AudioBuffer(np.zeros(16000 + 100))
        # the trailing 100 samples fall outside every frame
        g = estimate_gradient(x, victim, "ab", [16050, 16099], 50.0)
        assert g.values.tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("idx", [[0, 0], [-1], [10]])
    def test_bad_indices(self, idx):
        with pytest.raises(ValueError):
            estimate_gradient(AudioBuffer(np.zeros(10)), QuadraticOracle(np.zeros(10)), "a", idx, 1.0)

    def test_unreachable_base(self):
        victim = ToyVictim(ToyVictimParams(seed=0))
        with pytest.raises(ValueError):
            estimate_gradient(AudioBuffer(np.zeros(640)), victim, "abc", [0], 1.0)

    def test_oracle_failure_has_index(self):
        class Failing(QuadraticOracle):
            def score(self, audio, target):
                if audio.samples[2] != 0:
                    raise OracleError("nope")
                return super().score(audio, target)

        with pytest.raises(OracleError) as ei:
            estimate_gradient(AudioBuffer(np.zeros(5)), Failing(np.zeros(5)), "a", [0, 1, 2, 3], 1.0)
        assert ei.value.index == 2


class TestGradientStep:
    def test_zero(self):
        x = AudioBuffer(np.arange(5.0))
        g = SparseGradient(5, np.array([1, 2]), np.zeros(2))
        assert gradient_step(x, g) == x

    def test_unit(self):
        g = SparseGradient(6, np.array([3]), np.array([1.0]))
        assert gradient_step(AudioBuffer(np.zeros(6)), g).samples.tolist() == [0, 0, 0, 1, 0, 0]

    def test_nonfinite(self):
        g = SparseGradient(3, np.array([0]), np.array([np.nan]))
        with pytest.raises(ValueError):
            gradient_step(AudioBuffer(np.zeros(3)), g)

    def test_ascent_on_quadratic(self):
        rng = np.random.default_rng(4)
        c = rng.normal(size=200)
        x = AudioBuffer(c + rng.uniform(1, 10, size=200))
        oracle = QuadraticOracle(c)
        g = estimate_gradient(x, oracle, "a", np.arange(0, 200, 3), 1e-3)
        before = oracle.score(x, "a").score
        after = oracle.score(gradient_step(x, g, 0.1), "a").score
        assert after >= before


class TestRunAttackEdges:
    def test_already_target(self):
        victim = ToyVictim(ToyVictimParams(seed=1))
        x = speech_like_clip(1, duration=0.2)
        target = victim.score(x, "a").transcript
        r = run_attack(x, target, victim, AttackConfig(population_size=4))
        assert r.success and r.iterations_used == 0 and r.adversarial == x and r.trace == []

    def test_max_iters_zero(self):
        victim = ToyVictim(ToyVictimParams(seed=1))
        x = speech_like_clip(1, duration=0.2)
        r = run_attack(x, "zzz", victim, AttackConfig(population_size=4, max_iters=0))
        assert not r.success and r.adversarial == x and r.iterations_used == 0

    def test_invalid_target(self):
        with pytest.raises(ValueError):
            run_attack(AudioBuffer(np.zeros(640)), "Nope", ToyVictim(), AttackConfig(population_size=2))

    def test_oracle_failure_aborts_with_trace(self):
        victim, x, target, cfg = small_scenario()

        class Dies:
            n = 0

            def score(self, audio, t):
                self.n += 1
                if self.n > 40:
                    raise OracleError("gone")
                return victim.score(audio, t)

        with pytest.raises(AttackAborted) as ei:
            run_attack(x, target, Dies(), cfg)
        assert len(ei.value.trace) >= 1 and ei.value.best is not None


class TestAlgorithmStructure:
    def test_succeeds_with_both_phases(self, small_run):
        result, _, _ = small_run
        phases = {r.phase for r in result.trace}
        assert result.success and phases == {GENETIC, GRADIENT}

    def test_result_invariants(self, small_run):
        result, _, _ = small_run
        assert result.levenshtein == levenshtein(result.transcript, result.target)
        assert result.success == (result.levenshtein == 0)
        assert len(result.trace) == result.iterations_used

    def test_phase_condition(self, small_run):
        result, _, cfg = small_run
        for rec in result.trace:
            expect = GRADIENT if rec.edit_distance <= cfg.phase_switch_edit_distance else GENETIC
            assert rec.phase == expect

    def test_call_budget(self, small_run):
        result, per_gen, cfg = small_run
        for rec, n in zip(result.trace, per_gen):
            expect = cfg.population_size if rec.phase == GENETIC else cfg.fd_indices + 1
            assert rec.oracle_calls == expect == n

    def test_monotone_best(self, small_run):
        result, _, _ = small_run
        scores = [r.best_score for r in result.trace]
        assert all(b >= a for a, b in zip(scores, scores[1:]))

    def test_p_bounded(self, small_run):
        result, _, cfg = small_run
        assert all(0 <= r.mutation_p <= cfg.p_max for r in result.trace)

    def test_deterministic(self, small_run):
        result, _, _ = small_run
        victim, x, target, cfg = small_scenario()
        again = run_attack(x, target, victim, cfg)
        assert again.to_json() == result.to_json()

    def test_independent_of_workers(self):
        victim, x, target, cfg = small_scenario()
        cfg = AttackConfig(**{**cfg.to_dict(), "max_iters": 60})
        runs = [run_attack(x, target, CountingOracle(victim, batch=False), cfg, workers=w).to_json()
                for w in (1, 4)]
        assert runs[0] == runs[1]


def test_attack_module_is_black_box():
    """The attack engine must reach the victim only through ``score``."""
    tree = ast.parse(Path(attack_mod.__file__).read_text())
    forbidden = {"toy", "toy_forward", "forward", "forward_batch", "ToyVictim", "_Weights"}
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            assert "toy" not in (node.module or ""), node.module
            assert not forbidden & {a.name for a in node.names}
        elif isinstance(node, ast.Attribute):
            assert node.attr not in forbidden, node.attr
        elif isinstance(node, ast.Name):
            assert node.id not in forbidden, node.id
