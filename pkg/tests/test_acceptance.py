"""Acceptance suite: every shipped guarantee, one test per criterion.

Each criterion runs at its stated tolerance and reports one PASS/FAIL
line in the terminal summary. Oracles are independent implementations
from ``support``: finite differences, long-run plain gradient descent,
fixed-step projected descent, a loop-based SSIM, and dense grids.
"""

import functools
import time

import numpy as np
import pytest
from conftest import acceptance_results
from support import (
    finite_diff_grad,
    gradient_descent_oracle,
    mixed_scene,
    objective_value,
    projected_gd_oracle,
    relative_error,
    smooth_image,
    ssim_reference,
    textured_image,
)

from tvmap.dataset import DatasetRecord, read_dataset, write_dataset
from tvmap.fidelity import FidelityKind, gaussian_value_grad, poisson_value_grad
from tvmap.labels import golden_section_max, optimal_mu, oracle_mu_map
from tvmap.metrics import ssim
from tvmap.nn import (
    ARCHITECTURES,
    REGRESSOR_TAG,
    blank_bundle,
    load_weights,
    save_weights,
)
from tvmap.noise import add_gaussian
from tvmap.solver import (
    MU_MAX,
    MU_MIN,
    SolverConfig,
    solve,
    solve_gaussian,
    solve_poisson,
)
from tvmap.tv import GradientField, adjoint_diff, forward_diff, tv_value_grad


def criterion(name):
    """Record the PASS/FAIL outcome for the terminal summary."""

    def decorate(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                result = func(*args, **kwargs)
            except BaseException:
                acceptance_results.append((name, False))
                raise
            acceptance_results.append((name, True))
            return result

        return wrapper

    return decorate


@criterion("gradient correctness (TV, Gaussian, Poisson vs finite differences)")
def test_gradient_correctness():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    eps, eta = 1e-3, 0.01
    for _ in range(20):
        x = rng.random((8, 8))
        y = rng.random((8, 8))
        w = 0.5 + rng.random((8, 8))

        _, tv_grad = tv_value_grad(x, eps)
        fd = finite_diff_grad(lambda v: tv_value_grad(v, eps)[0], x)
        assert relative_error(fd, tv_grad) < 1e-6

        _, g_grad = gaussian_value_grad(x, y, w)
        fd = finite_diff_grad(lambda v: gaussian_value_grad(v, y, w)[0], x)
        assert relative_error(fd, g_grad) < 1e-6

        xp = 0.1 + x
        _, p_grad = poisson_value_grad(xp, y, w, eta)
        fd = finite_diff_grad(lambda v: poisson_value_grad(v, y, w, eta)[0], xp)
        assert relative_error(fd, p_grad) < 1e-6
    assert time.perf_counter() - start < 5.0


@criterion("adjoint identity for the difference operator")
def test_adjoint_identity():
    rng = np.random.default_rng(102)
    for _ in range(100):
        shape = (int(rng.integers(2, 24)), int(rng.integers(2, 24)))
        x = rng.standard_normal(shape)
        ph = rng.standard_normal(shape)
        pv = rng.standard_normal(shape)
        field = forward_diff(x)
        lhs = float(np.sum(field.dh * ph) + np.sum(field.dv * pv))
        rhs = float(np.sum(x * adjoint_diff(GradientField(dh=ph, dv=pv))))
        scale = np.linalg.norm(x) * np.sqrt(np.sum(ph ** 2) + np.sum(pv ** 2))
        assert abs(lhs - rhs) / scale < 1e-12


@criterion("Gaussian solver optimality vs 50k-iteration descent oracle")
def test_solver_optimality():
    rng = np.random.default_rng(103)
    cfg = SolverConfig(max_iters=5000, rel_tol=1e-12)
    for _ in range(5):
        y = rng.random((16, 16))
        mu = np.full((16, 16), float(rng.uniform(5.0, 20.0)))
        x, report = solve_gaussian(y, mu, cfg)
        assert report.residual_norm < 1e-4 * y.size
        x_oracle = gradient_descent_oracle(y, mu, cfg.eps, 50_000)
        f_oracle = objective_value(x_oracle, y, mu, FidelityKind.GAUSSIAN, cfg.eps, 0.0)
        assert abs(report.final_objective - f_oracle) / abs(f_oracle) < 1e-6


@criterion("Poisson projection invariant, acceptance rule, fixed-step comparison")
def test_projection_invariant_and_efficiency():
    rng = np.random.default_rng(104)
    for trial in range(10):
        y = rng.random((16, 16))
        mu = np.full((16, 16), float(rng.uniform(5.0, 30.0)))
        cfg = SolverConfig(max_iters=200)
        x, report = solve_poisson(y, mu, cfg, keep_iterates=True)
        for iterate in report.iterates:
            assert iterate.min() >= 0.0 and iterate.max() <= 1.0
        memory = cfg.backtrack.memory
        delta = cfg.backtrack.sufficient_decrease
        trace = report.objective_trace
        for k in range(report.iterations):
            reference = max(trace[max(0, k - memory + 1) : k + 1])
            bound = reference - delta / (2.0 * report.step_sizes[k]) * report.move_sq[k]
            assert trace[k + 1] <= bound + 1e-10
        x_fixed = projected_gd_oracle(y, mu, cfg.eps, cfg.eta, cfg.eps / 8.0, report.grad_evals)
        f_fixed = objective_value(x_fixed, y, mu, FidelityKind.POISSON, cfg.eps, cfg.eta)
        assert report.final_objective <= f_fixed, f"instance {trial}"


@criterion("golden-section labels match a 60-point grid oracle")
def test_golden_section_fidelity():
    # The grid bounds the achievable SSIM from below; golden section may
    # legitimately land between grid points and beat it, so the check is
    # one-sided: the search must never fall 1e-3 short of the grid max.
    start = time.perf_counter()
    cfg = SolverConfig(max_iters=300, rel_tol=1e-5)
    grid = np.logspace(np.log10(MU_MIN), np.log10(MU_MAX), 60)
    for index in range(20):
        clean = mixed_scene(index, (32, 32))
        noisy = add_gaussian(clean, 0.01, seed=9000 + index)
        label = optimal_mu(clean, noisy, FidelityKind.GAUSSIAN, cfg)
        grid_best = max(
            ssim(clean, solve(noisy, float(mu), FidelityKind.GAUSSIAN, cfg)[0]) for mu in grid
        )
        assert label.ssim_at_mu >= grid_best - 1e-3, f"patch {index}"
    assert time.perf_counter() - start < 600.0


@criterion("oracle parameter map beats the best scalar on 4 of 5 mixed images")
def test_oracle_map_superiority():
    label_cfg = SolverConfig(max_iters=150, rel_tol=1e-4)
    final_cfg = SolverConfig(max_iters=500, rel_tol=1e-6)
    wins = 0
    gains = []
    for index in range(5):
        clean = mixed_scene(index, (32, 32))
        noisy = add_gaussian(clean, 0.01, seed=500 + index)
        scalar = golden_section_max(
            lambda mu: ssim(clean, solve(noisy, mu, FidelityKind.GAUSSIAN, final_cfg)[0]),
            MU_MIN,
            MU_MAX,
        )
        mu_map = oracle_mu_map(clean, noisy, FidelityKind.GAUSSIAN, label_cfg, max_evals=10)
        restored, _ = solve(noisy, mu_map, FidelityKind.GAUSSIAN, final_cfg)
        gain = ssim(clean, restored) - scalar.fx
        gains.append(round(gain, 4))
        wins += gain >= 0.01
    assert wins >= 4, f"gains {gains}"


@criterion("constant parameter map equals scalar solve bit-for-bit")
def test_constant_map_equivalence():
    rng = np.random.default_rng(106)
    for trial in range(10):
        y = rng.random((12, 12))
        value = float(rng.uniform(0.5, 60.0))
        kind = FidelityKind.GAUSSIAN if trial % 2 == 0 else FidelityKind.POISSON
        cfg = SolverConfig(max_iters=80)
        scalar, _ = solve(y, value, kind, cfg)
        mapped, _ = solve(y, np.full((12, 12), value), kind, cfg)
        np.testing.assert_array_equal(scalar, mapped)


@criterion("SSIM equals an independent textbook implementation")
def test_ssim_oracle_equivalence():
    rng = np.random.default_rng(107)
    for pair in range(20):
        a = smooth_image(rng, (48, 48), roughness=5)
        if pair % 3 == 0:
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        elif pair % 3 == 1:
            b = textured_image(rng, (48, 48))
        else:
            b = rng.random((48, 48))
        assert abs(ssim(a, b) - ssim_reference(a, b)) < 1e-9
    x = rng.random((32, 32))
    assert ssim(x, x) == 1.0


@criterion("regressor reproduces the shape manifest and 2,798,721 parameters")
def test_regressor_shape_manifest():
    arch = ARCHITECTURES[REGRESSOR_TAG]
    assert arch.parameter_count() == 2_798_721
    trace = arch.shape_trace()
    expected = [
        (64, 32, 32),
        (64, 16, 16),
        (128, 16, 16),
        (128, 8, 8),
        (256, 8, 8),
        (256, 4, 4),
        (512, 4, 4),
        (512, 2, 2),
        (2048,),
        (512,),
        (128,),
        (1,),
    ]
    deduped = []
    for shape in trace:
        if not deduped or deduped[-1] != shape:
            deduped.append(shape)
    for shape in expected:
        assert shape in deduped
    # the forward pass itself asserts each layer's shape; run one to exercise it
    from tvmap.nn import forward_regressor

    forward_regressor(np.zeros((32, 32)), blank_bundle(REGRESSOR_TAG))


@criterion("TVDS and TVMW files round-trip byte-exactly and reject corruption")
def test_format_round_trips(tmp_path):
    from tvmap.errors import FormatError

    rng = np.random.default_rng(108)
    records = [
        DatasetRecord(
            patch=rng.random((32, 32)).astype(np.float32),
            label=float(rng.uniform(0.1, 50.0)),
            noise_kind=FidelityKind.POISSON,
            noise_param=30.0,
            source_id=i,
            origin=(i, 2 * i),
        )
        for i in range(50)
    ]
    tvds = tmp_path / "rt.tvds"
    write_dataset(tvds, records)
    payload = tvds.read_bytes()
    back = read_dataset(tvds)
    write_dataset(tmp_path / "rt2.tvds", back)
    assert (tmp_path / "rt2.tvds").read_bytes() == payload
    corrupted = bytearray(payload)
    corrupted[1] ^= 0xFF
    (tmp_path / "bad.tvds").write_bytes(bytes(corrupted))
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "bad.tvds")
    (tmp_path / "short.tvds").write_bytes(payload[:-3])
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "short.tvds")

    bundle = blank_bundle(REGRESSOR_TAG)
    for name, tensor in bundle.tensors.items():
        if not name.endswith(".eps"):
            bundle.tensors[name] = rng.standard_normal(tensor.shape).astype(np.float32) * 0.1
    tvmw = tmp_path / "rt.tvmw"
    save_weights(bundle, tvmw)
    weight_payload = tvmw.read_bytes()
    again = load_weights(tvmw)
    save_weights(again, tmp_path / "rt2.tvmw")
    assert (tmp_path / "rt2.tvmw").read_bytes() == weight_payload
    corrupted = bytearray(weight_payload)
    corrupted[2] ^= 0x10
    (tmp_path / "bad.tvmw").write_bytes(bytes(corrupted))
    with pytest.raises(FormatError):
        load_weights(tmp_path / "bad.tvmw")
    (tmp_path / "short.tvmw").write_bytes(weight_payload[:-11])
    with pytest.raises(FormatError):
        load_weights(tmp_path / "short.tvmw")
