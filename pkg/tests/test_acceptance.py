"""Acceptance suite: one test per criterion, tolerances pinned, one line printed each.

Criterion 10 (plot regeneration) belongs to the secondary reportviz package
and runs in reportviz/tests; criteria 1-9 here run with no secondary code.
"""

import math
import statistics
import time

import numpy as np
import pytest

from safebo.engine import (
    EngineOptions,
    GpSpec,
    Mclosbo,
    SafetyConfig,
    compute_safe_set,
    expander_set,
    losbo,
    maximizer_set,
)
from safebo.gp import GammaPrior, GammaPriorConfig, GpModel, KernelConfig, NoiseConfig
from safebo.grid import DomainGrid
from safebo.harness import (
    ExperimentConfig,
    run_experiment,
    run_study,
    variant_config,
    write_outputs,
)
from safebo.synthetic import synthetic_problem
from tests.test_engine import (
    euclid,
    make_engine,
    oracle_expanders,
    oracle_maximizers,
    oracle_safe_set,
    record_at,
    run_async,
    run_sync,
)
from tests.test_gp import dense_posterior_oracle


def report(num, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}", flush=True)
    return ok


def proposition1_suite(lengthscale_scale=1.0, outputscale_scale=1.0):
    """50 seeded problems x {sync,async} x {hyperopt on,off}, 50 iterations."""
    violations = 0
    runs = 0
    for i in range(50):
        d = 1 + i % 2
        q = 1 + i % 3
        for mode in ("sync", "async"):
            for hyperopt in (False, True):
                cfg = ExperimentConfig(
                    algorithm="mclosbo",
                    mode=mode,
                    hyperopt=hyperopt,
                    dimension=d,
                    iterations=50,
                    seed=i,
                    problem="synthetic",
                    problem_seed=i,
                    constraints=q,
                    lengthscale_scale=lengthscale_scale,
                    outputscale_scale=outputscale_scale,
                )
                result = run_experiment(cfg, 0)
                violations += result.summary["total_violations"]
                runs += 1
    return violations, runs


class TestCriterion1SafetySuite:
    def test_zero_violations(self):
        t0 = time.perf_counter()
        violations, runs = proposition1_suite()
        elapsed = time.perf_counter() - t0
        ok = violations == 0
        assert report(
            1, ok, f"deterministic-safety property suite: {violations} violations in {runs} runs "
            f"({elapsed/60:.1f} min, budget 10 min)"
        )
        assert elapsed <= 600.0


class TestCriterion2MisspecificationRobustness:
    @pytest.mark.parametrize("scale", [10.0, 0.1])
    def test_zero_violations_under_scaling(self, scale):
        t0 = time.perf_counter()
        violations, runs = proposition1_suite(lengthscale_scale=scale, outputscale_scale=scale)
        elapsed = time.perf_counter() - t0
        ok = violations == 0
        assert report(
            2, ok, f"misspecification x{scale}: {violations} violations in {runs} runs "
            f"({elapsed/60:.1f} min)"
        )
        assert elapsed <= 600.0


class TestCriterion3GpOracle:
    def test_posterior_matches_dense_solve(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(1, 21))
            cfg = KernelConfig.isotropic(rng.uniform(0.1, 0.5), rng.uniform(0.3, 2.0), d)
            noise = NoiseConfig(rng.uniform(0.05, 0.3))
            x = rng.uniform(size=(n, d))
            y = rng.normal(size=n)
            model = GpModel(cfg, noise, x, y)
            q = rng.uniform(size=d)
            mean, var = model.posterior_at(q)
            om, ov = dense_posterior_oracle(cfg, noise.noise_std, x, y, q)
            worst = max(worst, abs(mean - om), abs(var - ov))
        ok = worst <= 1e-8
        assert report(3, ok, f"GP vs dense-solve oracle on 100 datasets: max |diff| = {worst:.2e} <= 1e-8")


class TestCriterion4GradientChecks:
    def test_map_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        priors = GammaPriorConfig(GammaPrior(3.0, 10.0), GammaPrior(3.0, 2.0))
        h = 1e-5
        worst = 0.0
        instances = 0
        for _ in range(25):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(4, 11))
            x = rng.uniform(size=(n, d))
            y = rng.normal(size=n)
            use_priors = priors if rng.integers(2) else None
            log_params = np.concatenate(
                [
                    np.log(rng.uniform(0.15, 0.5, size=d)),
                    [math.log(rng.uniform(0.5, 2.0)), math.log(rng.uniform(0.05, 0.3) ** 2)],
                ]
            )

            def objective(p):
                model = GpModel(
                    KernelConfig(tuple(np.exp(p[:d])), math.exp(p[d])),
                    NoiseConfig(math.sqrt(math.exp(p[d + 1]))),
                    x,
                    y,
                    priors=use_priors,
                )
                return model.log_marginal_likelihood()

            _, grad = objective(log_params)
            for j in range(d + 2):
                up, dn = log_params.copy(), log_params.copy()
                up[j] += h
                dn[j] -= h
                fd = (objective(up)[0] - objective(dn)[0]) / (2 * h)
                rel = abs(grad[j] - fd) / max(abs(fd), 1e-6)
                worst = max(worst, rel)
            instances += 1
        ok = worst < 1e-4 and instances >= 20
        assert report(4, ok, f"MAP gradient vs central differences on {instances} instances: "
                      f"max rel err = {worst:.2e} < 1e-4")


class TestCriterion5SetOracles:
    def test_exact_equality_on_50_instances(self):
        rng = np.random.default_rng(555)
        exact = 0
        for _ in range(50):
            if rng.integers(2):
                grid = DomainGrid((int(rng.integers(10, 200)),))
            else:
                grid = DomainGrid((int(rng.integers(3, 15)), int(rng.integers(3, 15))))
            q = int(rng.integers(1, 4))
            cfg = SafetyConfig(
                lipschitz=tuple(rng.uniform(0.5, 3.0, size=q)),
                noise_bound=tuple(rng.uniform(0.0, 0.2, size=q)),
            )
            recs = [
                record_at(grid, int(rng.integers(grid.size)), rng.uniform(-0.5, 1.5, size=q), i)
                for i in range(int(rng.integers(1, 7)))
            ]
            initial = [int(rng.integers(grid.size))]
            safe = compute_safe_set(recs, cfg, grid, initial)
            assert np.array_equal(safe, oracle_safe_set(recs, cfg.lipschitz, cfg.noise_bound, grid, initial))

            mu = rng.normal(size=grid.size)
            sd = rng.uniform(0.01, 1.0, size=grid.size)
            maximizers = maximizer_set(safe, mu - sd, mu + sd)
            assert np.array_equal(maximizers, oracle_maximizers(safe, mu - sd, mu + sd))

            upper = rng.uniform(-0.5, 1.0, size=(q, grid.size))
            mask, counts = expander_set(safe, upper, cfg, grid)
            want_mask, want_counts = oracle_expanders(safe, upper, cfg.lipschitz, grid)
            assert np.array_equal(counts, want_counts)
            assert np.array_equal(mask, want_mask)
            exact += 1
        assert report(5, exact == 50, f"safe/maximizer/expander sets equal brute-force oracles "
                      f"on {exact}/50 random instances, exact")


class TestCriterion6LosboReduction:
    def test_query_sequences_equal_on_10_problems(self):
        matches = 0
        for seed in range(10):
            grid = DomainGrid((101,))
            problem = synthetic_problem(seed, d=1, q=1, grid=grid, tied=True)
            spec = GpSpec(KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.05))
            mc = Mclosbo(
                grid=grid,
                safety=SafetyConfig(
                    (float(problem.lipschitz[0]),), (float(problem.noise_bound[1]),)
                ),
                functions=[spec, spec],
                initial_safe=[problem.theta0_index],
                seed=seed,
            )
            lo = losbo(
                grid,
                float(problem.lipschitz[0]),
                float(problem.noise_bound[1]),
                spec,
                initial_safe=[problem.theta0_index],
                seed=seed,
            )
            if run_sync(mc, problem, 15, seed) == run_sync(lo, problem, 15, seed):
                matches += 1
        assert report(6, matches == 10, f"single-constraint reduction: query sequences equal "
                      f"on {matches}/10 seeded problems, exact")


@pytest.fixture(scope="module")
def benchmark_study():
    """The full desk-scale study: 5 variants x 3 dimensions x 30 replicates x 30 iters."""
    t0 = time.perf_counter()
    configs = [
        variant_config(v, dimension=dim, iterations=30, replicates=30, seed=0, problem="sim")
        for dim in (1, 2, 3)
        for v in (
            "mclosbo-sync",
            "mclosbo-sync-hyperopt",
            "mclosbo-async",
            "mclosbo-async-hyperopt",
            "safeopt-mc",
        )
    ]
    results = run_study(configs, workers=1)
    elapsed = time.perf_counter() - t0
    print(f"\n[info] criterion 7 study: {len(results)} runs in {elapsed/60:.1f} min", flush=True)
    return results


def median_best(results, variant, dim):
    vals = [
        r.summary["best_objective"]
        for r in results
        if r.summary["variant"] == variant and r.summary["dimension"] == dim
    ]
    return statistics.median(vals)


class TestCriterion7BenchmarkTrends:
    VARIANTS = (
        "mclosbo-sync",
        "mclosbo-sync-hyperopt",
        "mclosbo-async",
        "mclosbo-async-hyperopt",
        "safeopt-mc",
    )

    def test_7a_zero_violations(self, benchmark_study):
        violations = sum(r.summary["total_violations"] for r in benchmark_study)
        assert report("7a", violations == 0,
                      f"zero true-constraint violations across the study (got {violations})")

    def test_7b_d1_medians_within_10_percent(self, benchmark_study):
        medians = {v: median_best(benchmark_study, v, 1) for v in self.VARIANTS}
        grand = statistics.median(
            [r.summary["best_objective"] for r in benchmark_study if r.summary["dimension"] == 1]
        )
        spread = max(medians.values()) - min(medians.values())
        ok = spread <= 0.10 * abs(grand)
        assert report("7b", ok, f"d=1 variant medians within 10%: spread {spread:.4f} "
                      f"vs bound {0.10 * abs(grand):.4f} ({medians})")

    def test_7c_async_at_least_sync(self, benchmark_study):
        details = []
        ok = True
        for dim in (2, 3):
            a = median_best(benchmark_study, "mclosbo-async", dim)
            s = median_best(benchmark_study, "mclosbo-sync", dim)
            details.append(f"d={dim}: async {a:+.4f} vs sync {s:+.4f}")
            ok &= a >= s
        assert report("7c", ok, "async median >= sync median on d in {2,3}: " + "; ".join(details))

    def test_7d_every_variant_improves_on_initial(self, benchmark_study):
        ok = True
        details = []
        for dim in (1, 2, 3):
            initial = statistics.median(
                [r.summary["initial_objective"] for r in benchmark_study if r.summary["dimension"] == dim]
            )
            worst = min(median_best(benchmark_study, v, dim) for v in self.VARIANTS)
            details.append(f"d={dim}: worst median {worst:+.3f} vs initial {initial:+.3f}")
            ok &= all(median_best(benchmark_study, v, dim) > initial for v in self.VARIANTS)
        assert report("7d", ok, "every variant's median best improves on the initial controller: "
                      + "; ".join(details))


class TestCriterion8AsyncBookkeeping:
    def test_audits_on_20_seeded_async_runs(self):
        clean = 0
        for seed in range(20):
            grid = DomainGrid((61,)) if seed % 2 == 0 else DomainGrid((11, 11))
            problem = synthetic_problem(seed, d=grid.dim, q=1 + seed % 3, grid=grid)
            engine = make_engine(problem, grid, seed=seed)
            run_async(engine, problem, iterations=15, seed=seed)
            for entry in engine.audit_log:
                completed_ids = set(entry["completed_ids"])
                assert completed_ids.isdisjoint(entry["pending_ids"])
                used = [r for r in engine.observations if r.record_id in completed_ids]
                recomputed = compute_safe_set(used, engine.safety, grid, engine.initial_safe)
                assert np.array_equal(entry["safe_mask"], recomputed)
            clean += 1
        assert report(8, clean == 20, f"virtual points never alter the safe set and pending "
                      f"points never enter it, on {clean}/20 async runs, exact")


class TestCriterion9Determinism:
    def test_same_seed_byte_identical_runs_csv(self, tmp_path):
        cfg = variant_config(
            "mclosbo-async-hyperopt", dimension=2, iterations=10, replicates=3, seed=17, problem="sim"
        )
        blobs = []
        for sub in ("first", "second"):
            results = run_study([cfg], workers=1)
            paths = write_outputs([cfg], results, tmp_path / sub, workers=1)
            blobs.append(paths["runs"].read_bytes())
        ok = blobs[0] == blobs[1]
        assert report(9, ok, f"repeated same-seed run yields byte-identical runs.csv "
                      f"({len(blobs[0])} bytes)")
