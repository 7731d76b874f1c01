"""Oracle-equivalence self checks, runnable from the CLI.

Each check re-derives expected results through an independent route (dense
LU linear algebra, closed forms, exhaustive re-evaluation) and compares the
library's fast paths against it.
"""

from __future__ import annotations

import math

import numpy as np

from .acquisition import (
    AcqConfig,
    AcqKind,
    SearchHistory,
    expected_improvement,
    ms_ei_xi,
    probability_of_improvement,
    select_next,
)
from .gp import Sample, gp_fit, gp_predict
from .kernels import KernelSpec, MaternFamily, SpatioTemporalKernel, kernel_eval, st_kernel_eval


def dense_posterior(model, locations, times):
    """Reference GP posterior via dense LU solves (no Cholesky reuse)."""
    from .kernels import cross_covariance, gram_matrix

    gram = gram_matrix(model.kernel, model.locations, model.times)
    a = gram + model.noise * np.eye(model.n)
    k_star = cross_covariance(model.kernel, locations, times, model.locations, model.times)
    means = k_star @ np.linalg.solve(a, model.values) + model.mean_shift
    covs = model.kernel.prior_variance - np.einsum(
        "ij,ji->i", k_star, np.linalg.solve(a, k_star.T)
    )
    return means, np.maximum(covs, 0.0)


def random_model(rng: np.random.Generator, n: int | None = None):
    n = n or int(rng.integers(2, 21))
    kernel = SpatioTemporalKernel(
        spatial=KernelSpec(
            family=rng.choice(list(MaternFamily)),
            variance=float(rng.uniform(0.3, 2.0)),
            lengthscale=float(rng.uniform(0.05, 0.8)),
        ),
        temporal=KernelSpec(
            family=rng.choice(list(MaternFamily)),
            variance=float(rng.uniform(0.3, 2.0)),
            lengthscale=float(rng.uniform(0.5, 5.0)),
        ),
    )
    samples = [
        Sample(
            location=(float(rng.random()), float(rng.random())),
            time=int(rng.integers(0, 5)),
            value=float(rng.normal()),
        )
        for _ in range(n)
    ]
    noise = float(rng.uniform(1e-6, 1e-2))
    return gp_fit(samples, kernel, noise)


def check_gp_equivalence(instances: int = 50, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        model = random_model(rng)
        m = int(rng.integers(1, 8))
        locs = rng.random((m, 2))
        times = rng.integers(0, 5, size=m).astype(float)
        means, variances = gp_predict(model, (locs, times))
        ref_means, ref_vars = dense_posterior(model, locs, times)
        worst = max(
            worst,
            float(np.max(np.abs(means - ref_means))),
            float(np.max(np.abs(variances - ref_vars))),
        )
    return worst < 1e-8, f"max abs deviation {worst:.3e} over {instances} instances"


def check_kernels(pairs: int = 1000, seed: int = 1) -> tuple[bool, str]:
    spec = KernelSpec(family=MaternFamily.MATERN52, variance=1.0, lengthscale=1.0)
    closed = (1.0 + math.sqrt(5.0) + 5.0 / 3.0) * math.exp(-math.sqrt(5.0))
    err_value = abs(kernel_eval(spec, 1.0) - closed)

    rng = np.random.default_rng(seed)
    kernel = SpatioTemporalKernel(
        spatial=KernelSpec(lengthscale=0.3), temporal=KernelSpec(lengthscale=2.0)
    )
    worst = 0.0
    for _ in range(pairs):
        p1 = ((float(rng.random()), float(rng.random())), float(rng.integers(0, 10)))
        p2 = ((float(rng.random()), float(rng.random())), float(rng.integers(0, 10)))
        combined = st_kernel_eval(kernel, p1, p2)
        r_s = math.dist(p1[0], p2[0])
        r_t = abs(p1[1] - p2[1])
        product = kernel_eval(kernel.spatial, r_s) * kernel_eval(kernel.temporal, r_t)
        worst = max(worst, abs(combined - product))
    ok = err_value < 1e-5 and worst < 1e-12
    return ok, f"closed-form dev {err_value:.3e}, separability dev {worst:.3e}"


def exhaustive_select(model, candidates, history, cfg):
    """Reference argmax: scalar re-evaluation of the acquisition per candidate."""
    sampled = set(history.locations)
    available = [i for i, c in enumerate(candidates) if c[0] not in sampled]
    if history.n == 0:
        return candidates[0]
    means, variances = gp_predict(model, candidates)
    if not available:
        return candidates[int(np.argmax(variances))]
    if cfg.kind is AcqKind.MSEI:
        xi = ms_ei_xi(history, cfg)
    else:
        xi = cfg.fixed_xi
    best_i, best_val = None, -math.inf
    for i in available:
        mu = means[i] + cfg.score_offset
        sd = math.sqrt(variances[i])
        if cfg.kind is AcqKind.PI:
            val = probability_of_improvement(mu, sd, history.incumbent_value, xi)
        else:
            val = expected_improvement(mu, sd, history.incumbent_value, xi)
        if val > best_val:
            best_i, best_val = i, val
    return candidates[best_i]


def check_select_next(instances: int = 100, seed: int = 2) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        model = random_model(rng, n=int(rng.integers(3, 12)))
        t = 4
        d = int(rng.integers(3, 7))
        centers = (np.arange(d) + 0.5) / d
        candidates = [((float(x), float(y)), t) for y in centers for x in centers]
        history = SearchHistory()
        for _ in range(int(rng.integers(1, 6))):
            loc = candidates[int(rng.integers(len(candidates)))][0]
            history.record(loc, float(rng.uniform(0.0, 1.0)))
        cfg = AcqConfig(kind=rng.choice(list(AcqKind)), fixed_xi=0.01)
        if select_next(model, candidates, history, cfg) != exhaustive_select(
            model, candidates, history, cfg
        ):
            mismatches += 1
    return mismatches == 0, f"{mismatches} argmax mismatches over {instances} instances"


def run_selftests(seed: int = 0) -> list[tuple[str, bool, str]]:
    return [
        ("gp-dense-solve-equivalence", *check_gp_equivalence(seed=seed)),
        ("kernel-closed-form-and-separability", *check_kernels(seed=seed + 1)),
        ("select-next-exhaustive-agreement", *check_select_next(seed=seed + 2)),
    ]
