"""Exit criteria 1-10. Each test records a PASS/FAIL line (printed in the terminal summary).

Run only these with ``pytest -m acceptance -v``.
"""
import itertools
import math
import time

import numpy as np
import pytest

from gkpqec import autodiff as ad
from gkpqec.evaluation import (dimensionless_decay_rate, fit_strategy_saturation,
                               infidelity_per_cycle, inject_displacement_error, pauli_time_series,
                               saturation_model)
from gkpqec.fock import PROJ_G, HilbertConfig, fock_ket
from gkpqec.gkp import (CodeLattice, GkpStateSpec, logical_expectation, logical_ket, mean_photon,
                        pauli_operator, stabilizer)
from gkpqec.grape import TrainConfig, frame_sign, optimize_lookup, surrogate, to_vars, train_agent
from gkpqec.lindblad import HamiltonianParams, IntegratorConfig, NoiseModel, build_generator, propagate
from gkpqec.policies import FeedForwardPolicy, LookupPolicy, RecurrentPolicy, StandardPolicy
from gkpqec.sbs import (STANDARD_VECTOR, Engine, apply_half_cycle, enumerate_branches,
                        expected_return, finish_half_cycle, measure_ancilla, run_trajectory)

from .conftest import CRITERIA_LINES

pytestmark = pytest.mark.acceptance


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA_LINES[k] = line
    print(line)
    assert ok, line


def test_criterion_01_cavity_decay_oracle():
    t0 = time.perf_counter()
    cfg = HilbertConfig(20)
    T_s = NoiseModel.preset("high").T_s
    gen = build_generator(NoiseModel(T_s=T_s), HamiltonianParams(), cfg)
    rho = np.kron(np.outer(fock_ket(1, cfg), fock_ket(1, cfg)), PROJ_G).astype(complex)
    n_op = np.kron(np.diag(np.arange(20.0)), np.eye(2))
    n_pts, err = 40, 0.0
    for k in range(1, n_pts + 1):
        rho = propagate(rho, 2 * T_s / n_pts, gen, IntegratorConfig().dt)
        t = 2 * T_s * k / n_pts
        err = max(err, abs(float(np.real(np.trace(n_op @ rho))) - math.exp(-t / T_s)))
    dt = time.perf_counter() - t0
    report(1, err < 1e-6 and dt < 10, f"max |<n>(t) - exp(-t/T_s)| = {err:.2e} (< 1e-6), runtime {dt:.1f} s (< 10 s)")


def test_criterion_02_trace_positivity():
    t0 = time.perf_counter()
    cfg = HilbertConfig(30)
    eng = Engine(cfg, NoiseModel.preset("high"))
    psi = logical_ket(GkpStateSpec("+Z", 0.34, cfg=cfg, max_truncation_loss=1e-2))
    rng = np.random.default_rng(2024)
    rho = eng.initial_joint(psi)
    worst_tr, worst_eig = 0.0, math.inf
    for half in range(20):
        pre = apply_half_cycle(rho, STANDARD_VECTOR, eng)
        _, post, _ = measure_ancilla(pre, rng=rng)
        rho = finish_half_cycle(post, STANDARD_VECTOR, eng)
        if half % 2 == 1:
            worst_tr = max(worst_tr, abs(float(np.real(np.trace(rho))) - 1))
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()))
    dt = time.perf_counter() - t0
    ok = worst_tr < 1e-8 and worst_eig > -1e-7 and dt < 120
    report(2, ok, f"max |Tr-1| = {worst_tr:.1e} (< 1e-8), min eig = {worst_eig:.1e} (> -1e-7), "
                  f"runtime {dt:.0f} s (< 120 s)")


def test_criterion_03_state_construction():
    cfg = HilbertConfig(100)
    lat = CodeLattice.square()
    plus = logical_ket(GkpStateSpec("+Z", 0.34, lat, cfg))
    minus = logical_ket(GkpStateSpec("-Z", 0.34, lat, cfg))
    n = mean_photon(plus)
    overlap = abs(np.vdot(plus, minus)) ** 2
    sx = []
    for d in (0.5, 0.4, 0.3):
        psi = logical_ket(GkpStateSpec("+Z", d, lat, cfg))
        sx.append(float(np.real(np.vdot(psi, stabilizer(lat, "X", cfg) @ psi))))
    mono = sx[0] < sx[1] < sx[2]
    ok = abs(n - 5) <= 0.5 and overlap < 0.01 and mono
    report(3, ok, f"<n> = {n:.3f} (5 +/- 0.5), |<+Z|-Z>|^2 = {overlap:.1e} (< 0.01), "
                  f"Re<S_X> at delta 0.5/0.4/0.3 = {sx[0]:.3f}/{sx[1]:.3f}/{sx[2]:.3f} (increasing)")


def test_criterion_04_enumeration_vs_monte_carlo():
    t0 = time.perf_counter()
    cfg = HilbertConfig(25)
    eng = Engine(cfg, NoiseModel.preset("high"))
    psi = logical_ket(GkpStateSpec("+Z", 0.34, cfg=cfg, max_truncation_loss=1e-2))
    z = pauli_operator(CodeLattice.square(), "Z", cfg)
    branches = enumerate_branches(psi, None, 4, eng)
    psum = sum(b.probability for b in branches)

    def zval(rho):
        rc = rho[0::2, 0::2] + rho[1::2, 1::2]
        return float(np.real(np.sum(z.T * rc)))

    exact = sum(b.probability * zval(b.final_rho) for b in branches)
    rng = np.random.default_rng(99)
    cache = {}
    samples = np.array([run_trajectory(psi, None, 4, eng, rng=rng, cache=cache, z_op=z).z_snapshots[-1]
                        for _ in range(10_000)])
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    dev = abs(samples.mean() - exact)
    dt = time.perf_counter() - t0
    ok = len(branches) == 16 and abs(psum - 1) < 1e-8 and dev < 3 * se and dt < 600
    report(4, ok, f"{len(branches)} branches, |sum p - 1| = {abs(psum - 1):.1e} (< 1e-8), "
                  f"|MC - exact| = {dev:.2e} vs 3 SE = {3 * se:.2e}, runtime {dt:.0f} s (< 600 s)")


def _fd(f, x, h=1e-5):
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        out[idx] = (f(xp) - f(xm)) / (2 * h)
    return out


def _rel(g, fd):
    return np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)


def test_criterion_05_gradients():
    cfg = HilbertConfig(25)
    eng = Engine(cfg, NoiseModel.preset("high"))
    psi = logical_ket(GkpStateSpec("+Z", 0.34, cfg=cfg, max_truncation_loss=1e-2))
    pol = LookupPolicy(2)
    table = np.random.default_rng(5).normal(scale=0.1, size=(3, 15))

    # 30 gate parameters of a forced "ge" episode: nodes 0 and 1 of the table
    wv = to_vars({"table": table})
    tr = run_trajectory(psi, pol, 2, eng, mode="forced", outcomes="ge", weights=wv)
    g_tape = ad.grad(tr.return_var, wv["table"])[:2]

    def forced(x):
        t = table.copy()
        t[:2] = x
        return run_trajectory(psi, pol, 2, eng, mode="forced", outcomes="ge",
                              weights={"table": t}).return_value

    fd = _fd(forced, table[:2].copy())
    err_tape = float(_rel(g_tape, fd).max())

    # Feedback-GRAPE estimator weighted over the exact 4-branch tree
    wv = to_vars({"table": table})
    total = 0.0
    for seq in itertools.product("ge", repeat=2):
        tr = run_trajectory(psi, pol, 2, eng, mode="forced", outcomes=seq, weights=wv)
        total = total + tr.probability * surrogate([tr])
    g_est = ad.grad(total, wv["table"])
    fd_exact = _fd(lambda x: float(ad.value(expected_return(psi, pol, 2, eng, {"table": x}))), table)
    err_est = float(_rel(g_est, fd_exact).max())
    ok = err_tape < 1e-3 and err_est < 1e-3
    report(5, ok, f"max rel err: 30 tape gradients {err_tape:.1e}, tree-averaged estimator "
                  f"{err_est:.1e} (< 1e-3, denominators floored at 1e-6)")


def test_criterion_06_lookup_ceiling():
    t0 = time.perf_counter()
    cfg = HilbertConfig(25)
    eng = Engine(cfg, NoiseModel.preset("low"))
    # at n_fock = 25 the delta = 0.2 grid state loses about 15% of its norm
    psi = logical_ket(GkpStateSpec("+Z", 0.2, cfg=cfg, max_truncation_loss=0.2))
    std = float(ad.value(expected_return(psi, StandardPolicy(), 4, eng)))
    _, info = optimize_lookup(4, psi, eng, maxiter=60)
    dt = time.perf_counter() - t0
    margin = info["expected_return"] - std
    # exact arithmetic: the margin only has to clear accumulated round-off and RK4 error
    ok = margin > 1e-4 and dt < 3600
    report(6, ok, f"lookup {info['expected_return']:.5f} vs standard {std:.5f}, margin {margin:.2e} "
                  f"(> 1e-4), optimization {dt:.0f} s (< 3600 s)")


# reduced-scale training recipe
C7_EPOCHS = 200
C7_LR = 1e-3
C7_SEED = 0
C7_TRAIN_DT = 1 / 500
# Adam runs a fixed epoch budget; convergence is judged on the exact objective
CONVERGENCE_TOL = 1e-4


def test_criterion_07_reduced_scale_nmf():
    cfg = TrainConfig(epochs=C7_EPOCHS, batch_size=6, n_cycles_train=4, learning_rate=C7_LR,
                      noise_preset="high", n_fock=25, dt=C7_TRAIN_DT, max_truncation_loss=1e-2,
                      n_agents=1, seed=C7_SEED, delta=0.34, zero_output=True)
    eng_train = cfg.engine()
    psi = cfg.initial_state()
    eng_eval = Engine(HilbertConfig(25), NoiseModel.preset("high"))
    scores = {"standard": float(ad.value(expected_return(psi, StandardPolicy(), 8, eng_eval)))}
    for name, cls in (("gru", RecurrentPolicy), ("fnn", FeedForwardPolicy)):
        pol = cls(seed=C7_SEED, zero_output=True)
        train_agent(cfg, pol, engine=eng_train, rho0=psi)
        scores[name] = float(ad.value(expected_return(psi, pol, 8, eng_eval)))
    m_std = scores["gru"] - scores["standard"]
    m_fnn = scores["gru"] - scores["fnn"]
    ok = m_std > 3 * CONVERGENCE_TOL and m_fnn > 3 * CONVERGENCE_TOL
    report(7, ok, f"depth-8 exact fidelity: gru {scores['gru']:.5f}, fnn {scores['fnn']:.5f}, "
                  f"standard {scores['standard']:.5f}; margins {m_std:.1e} and {m_fnn:.1e} "
                  f"(> 3 x {CONVERGENCE_TOL:g})")


def test_criterion_08_formula_anchors():
    # anchor lifetimes in cycle units: standard 700 for all Paulis; NMF 1500 (X, Z) and 770 (Y)
    std = infidelity_per_cycle([700.0, 700.0, 700.0])
    nmf = infidelity_per_cycle([1500.0, 770.0, 1500.0])
    rate = dimensionless_decay_rate(1 / 610, 10)
    e_std, e_nmf, e_rate = abs(std / 1.5e-3 - 1), abs(nmf / 4.3e-4 - 1), abs(rate / 0.016 - 1)
    ok = e_std < 0.05 and e_nmf < 0.05 and e_rate < 0.02
    report(8, ok, f"1-F_e std {std:.3e} vs 1.5e-3 (rel {e_std:.0%}), NMF {nmf:.3e} vs 4.3e-4 "
                  f"(rel {e_nmf:.0%}) [< 5%]; decay rate {rate:.5f} vs 0.016 (rel {e_rate:.1%}) [< 2%]")


def test_criterion_09_displacement_threshold():
    cfg = HilbertConfig(30)
    eng = Engine(cfg, NoiseModel.preset("low"))
    lat = CodeLattice.square()
    z = pauli_operator(lat, "Z", cfg)
    psi = logical_ket(GkpStateSpec("+Z", 0.34, lat, cfg, max_truncation_loss=1e-3))
    z0 = logical_expectation(psi, z)
    z_big = logical_expectation(inject_displacement_error(psi, 0.7, cfg), z)
    base = pauli_time_series(StandardPolicy(), eng, "+Z", 5, initial=psi).mean[-1]
    hit = pauli_time_series(StandardPolicy(), eng, "+Z", 5,
                            initial=inject_displacement_error(psi, 0.2, cfg)).mean[-1]
    ratio = hit / base
    ok = z0 > 0 and z_big < 0 and ratio > 0.8
    report(9, ok, f"<Z> {z0:.3f} -> {z_big:.3f} after alpha = 0.7 (sign flip); alpha = 0.2 then 5 cycles: "
                  f"{hit:.4f} vs uninjected {base:.4f} (ratio {ratio:.3f} > 0.8)")


def test_criterion_10_strategy_fit():
    rng = np.random.default_rng(10)
    outcomes = list(rng.choice(["g", "e"], size=300, p=[0.85, 0.15]))
    truth = {"g": (1.2, 0.35), "e": (-0.4, 0.9)}
    series = [0.0]
    start = 0
    for k in range(1, len(outcomes)):
        if outcomes[k] != outcomes[k - 1]:
            start = k
        anchor, j = (series[0], k) if start == 0 else (series[start - 1], k - start + 1)
        pi, g = truth[outcomes[k]]
        series.append(float(saturation_model(anchor, pi, g, j)))
    fit = fit_strategy_saturation(series, outcomes)[0]
    errs = [max(abs(fit.pi_inf[o] / pi - 1), abs(fit.gamma[o] / g - 1)) for o, (pi, g) in truth.items()]
    report(10, max(errs) < 0.01, f"max relative error of (pi_inf, gamma) = {max(errs):.1e} (< 1%)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
