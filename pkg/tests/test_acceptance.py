"""End-to-end acceptance suite for the simulation library.

Each test covers one headline behavior and prints a single PASS/FAIL
verdict line with the measured numbers, so running

    pytest tests/test_acceptance.py -v -s

doubles as an acceptance report.  The suite is deterministic: every
stochastic step carries an explicit seed, and the statistical checks
use 3-sigma binomial bars at 1e6 samples.

The full suite reconstructs three states from 1e6-record batches and
runs the default sweep twice; expect roughly twenty minutes on one
core.
"""

import filecmp
import time
import warnings

import numpy as np
import pytest

from pacvqkd.analysis import (
    count_density_lobes,
    kurtosis,
    log_negativity,
    wigner,
)
from pacvqkd.fock import (
    Cutoff,
    Mode,
    fidelity,
    state_from_json,
    state_to_json,
)
from pacvqkd.grids import PhaseSpaceGrid, QuadratureGrid
from pacvqkd.measurement import (
    FilterParams,
    husimi_sigma_sq,
    postselect,
    predict_success,
    sample_records,
)
from pacvqkd.protocol import BerConfig, bit_error_rate, exact_error_probability
from pacvqkd.security import (
    evaluate_security,
    holevo_bound,
    joint_quadrature_distribution,
    mutual_information,
    plob_bound,
    rate_loss_sweep,
)
from pacvqkd.states import (
    ChannelParams,
    ImpurityParams,
    TmsvParams,
    add_photons,
    loss_channel,
    make_tmsv,
    noisy_tmsv,
)
from pacvqkd.sweep import load_config, run_sweep
from pacvqkd.tomography import MleConfig, reconstruct

CUTOFF = Cutoff(10)
LAM_HALF = TmsvParams(0.5)

# reconstructed (state, diagnostics) pairs stashed for the hygiene gate
_RECONSTRUCTIONS = []


def _verdict(name, ok, detail):
    print("[%s] %s: %s" % ("PASS" if ok else "FAIL", name, detail))
    assert ok, "%s: %s" % (name, detail)


@pytest.fixture(scope="module")
def tmsv_half():
    return make_tmsv(LAM_HALF, CUTOFF)


@pytest.fixture(scope="module")
def records_seed_1001(tmsv_half):
    # shared 1e6-record heterodyne batch: k=0 reconstruction input and
    # the preselection pool for the acceptance-law check
    return sample_records(tmsv_half, 1_000_000, rng_seed=1001)


def test_01_postselected_tomography_matches_ideal_addition(
    tmsv_half, records_seed_1001
):
    """Filter-then-reconstruct reproduces exact k-photon addition.

    1e6 preselection records per k; the randomized acceptance filter
    emulates the addition, the reconstruction runs to a tight
    successive-iterate infidelity, and the result is compared with the
    operator-applied state.  Bars: fidelity 0.99 for the identity
    filter, 0.96 with one and two added photons; wall budget two hours
    per reconstruction.
    """
    settings = [
        # (k, alpha_c_sq, epsilon, max_iterations, fidelity bar)
        (0, 6.0, 1e-10, 450, 0.99),
        (1, 6.0, 1e-11, 400, 0.96),
        (2, 9.0, 1e-11, 400, 0.96),
    ]
    parts = []
    ok = True
    for k, acsq, eps, max_iter, bar in settings:
        if k == 0:
            records = records_seed_1001
        else:
            records = sample_records(tmsv_half, 1_000_000, rng_seed=1001 + k)
        kept, _ = postselect(records, FilterParams(k, acsq), rng_seed=2002 + k)
        config = MleConfig(max_iterations=max_iter, convergence_epsilon=eps)
        start = time.perf_counter()
        with warnings.catch_warnings():
            # the k >= 1 runs deliberately exhaust the iteration budget
            warnings.simplefilter("ignore")
            est, diag = reconstruct(kept, CUTOFF, config)
        wall = time.perf_counter() - start
        target, _ = add_photons(tmsv_half, Mode.A, k)
        f = fidelity(est.entries, target.entries)
        _RECONSTRUCTIONS.append((est, diag))
        ok = ok and f >= bar and wall <= 7200.0
        parts.append("F(k=%d)=%.5f>=%.2f in %.0fs" % (k, f, bar, wall))
    _verdict("01 addition equivalence", ok, ", ".join(parts))


def test_02_acceptance_probability_law(tmsv_half, records_seed_1001):
    """Empirical postselection fraction follows k!(2 sigma^2/a_c^2)^k.

    At alpha_c_sq = 80/3 and lam = 0.5 the predictions are 0.05,
    0.005, 7.5e-4 for k = 1, 2, 3; each empirical fraction must sit
    within 3 binomial sigma and consecutive fractions must drop by
    roughly an order of magnitude (predicted ratios 10 and 6.7).
    """
    sigma_sq = husimi_sigma_sq(tmsv_half, Mode.A)
    n = len(records_seed_1001)
    fractions = {}
    parts = []
    ok = True
    for k in (1, 2, 3):
        filt = FilterParams(k, 80.0 / 3.0)
        predicted = predict_success(sigma_sq, filt)
        _, fraction = postselect(records_seed_1001, filt, rng_seed=2002 + k)
        fractions[k] = fraction
        sigma = np.sqrt(predicted * (1.0 - predicted) / n)
        ok = ok and abs(fraction - predicted) <= 3.0 * sigma
        parts.append("P%d=%.2e vs %.2e (%+.1f sd)"
                     % (k, fraction, predicted, (fraction - predicted) / sigma))
    ratios = (fractions[1] / fractions[2], fractions[2] / fractions[3])
    ok = ok and all(5.0 <= r <= 15.0 for r in ratios)
    parts.append("ratios %.1f, %.1f in [5, 15]" % ratios)
    _verdict("02 acceptance law", ok, ", ".join(parts))


def test_03_gaussian_cross_validation(tmsv_half):
    """Numeric pipeline matches Gaussian closed forms on Gaussian states.

    For the bare source through loss the grid-based mutual information,
    Holevo bound, and keyrate must each agree with the covariance-based
    formulas within 1e-2 bits.
    """
    worst = 0.0
    for t in (1.0, 0.75, 0.5, 0.25):
        state = loss_channel(tmsv_half, Mode.B, ChannelParams(t))
        rep = evaluate_security(state, 0, t, 1.0)
        worst = max(
            worst,
            abs(rep.i_ab - rep.gaussian_i_ab),
            abs(rep.chi_e - rep.gaussian_chi_e),
            abs(rep.keyrate - rep.gaussian_keyrate),
        )
    _verdict("03 gaussian cross-validation", worst < 1e-2,
             "max |numeric - gaussian| = %.2e bits over T in {1, 0.75, 0.5, 0.25}"
             % worst)


def test_04_gaussian_estimate_collapses_on_added_photons():
    """The covariance-only keyrate misjudges photon-added states.

    On an impure source in the deep-loss regime the Gaussian estimate
    is positive at k = 0 but turns negative after one addition, while
    the non-Gaussian rate stays above it; the Gaussian Holevo estimate
    jumps by at least 2.5x.
    """
    source = noisy_tmsv(LAM_HALF, ImpurityParams(0.0, 0.25), CUTOFF)
    added, _ = add_photons(source, Mode.A, 1)
    parts = []
    ok = True
    for t in (0.02, 0.03):
        chan = ChannelParams(t)
        rep0 = evaluate_security(loss_channel(source, Mode.B, chan), 0, t, 1.0)
        rep1 = evaluate_security(loss_channel(added, Mode.B, chan), 1, t, 1.0)
        ratio = rep1.gaussian_chi_e / rep0.gaussian_chi_e
        ok = (ok and rep0.gaussian_keyrate > 0.0 and rep1.gaussian_keyrate < 0.0
              and rep1.keyrate > rep1.gaussian_keyrate and ratio >= 2.5)
        parts.append("T=%.2f: KG0=%+.4f KG1=%+.4f KNG1=%+.4f chi ratio %.2f"
                     % (t, rep0.gaussian_keyrate, rep1.gaussian_keyrate,
                        rep1.keyrate, ratio))
    _verdict("04 gaussian extremity failure", ok, "; ".join(parts))


@pytest.fixture(scope="module")
def receiver_side_sweep():
    # ideal lam = 0.6 states, photons added on the transmitted mode
    # after the channel, over a 10-point loss grid
    dbs = [float(d) for d in range(2, 21, 2)]
    ts = [10.0 ** (-d / 10.0) for d in dbs]
    reports = rate_loss_sweep(
        0.6, [0, 1, 2, 3], ts, cutoff=Cutoff(14),
        addition_mode=Mode.B, addition_before_loss=False,
    )
    per_k = {k: [r for r in reports if r.k == k] for k in range(4)}
    assert all(len(v) == len(dbs) for v in per_k.values())
    return dbs, per_k


def test_05_keyrate_monotone_in_added_photons(receiver_side_sweep):
    """Receiver-side addition raises the keyrate at every loss point.

    Keyrates must be positive, strictly increasing in k at each of the
    ten loss points, and the log2-keyrate slopes over the three
    deepest-loss points must agree across k within 15% (same scaling
    exponent).
    """
    dbs, per_k = receiver_side_sweep
    positive = all(r.keyrate > 0.0 for k in per_k for r in per_k[k])
    monotone = all(
        per_k[k + 1][i].keyrate > per_k[k][i].keyrate
        for k in range(3)
        for i in range(len(dbs))
    )
    slopes = [
        np.polyfit(dbs[-3:], [np.log2(r.keyrate) for r in per_k[k][-3:]], 1)[0]
        for k in range(4)
    ]
    spread = (max(slopes) - min(slopes)) / abs(np.mean(slopes))
    ok = positive and monotone and spread < 0.15
    _verdict("05 keyrate monotonicity", ok,
             "positive=%s, monotone in k at 10 loss points=%s, "
             "slope spread %.3f < 0.15" % (positive, monotone, spread))


def test_06_plob_exceedance(receiver_side_sweep):
    """Per-success keyrates beat the repeaterless bound at high k.

    Somewhere on the loss grid the k = 2 keyrate must exceed
    -log2(1 - T) by at least 5% and the k = 3 keyrate by at least 25%.
    """
    _, per_k = receiver_side_sweep
    excess = {
        k: max(r.keyrate / plob_bound(r.transmissivity) - 1.0 for r in per_k[k])
        for k in (2, 3)
    }
    ok = excess[2] >= 0.05 and excess[3] >= 0.25
    _verdict("06 plob exceedance", ok,
             "max excess k=2: %+.1f%% (>= 5%%), k=3: %+.1f%% (>= 25%%)"
             % (100 * excess[2], 100 * excess[3]))


def test_07_entanglement_distillation(tmsv_half):
    """Each added photon strictly increases the log-negativity.

    Monotonicity in k is required at every tested transmissivity.  The
    truncated source must match the analytic log2((1+lam)/(1-lam))
    within 1e-3 where the truncation deficit allows (lam <= 0.45 at
    n_max = 10); at lam = 0.6 the measured deficit must equal the
    closed-form truncation tail log2((1+lam^11)/(1-lam^11)), which at
    1.05e-2 bits is itself above the 1e-3 bar, so exact agreement is
    the stronger check there.
    """
    monotone = True
    for t in (1.0, 0.75, 0.5, 0.25):
        ens = []
        for k in range(4):
            state, _ = add_photons(tmsv_half, Mode.A, k)
            state = loss_channel(state, Mode.B, ChannelParams(t))
            ens.append(log_negativity(state))
        monotone = monotone and all(b > a for a, b in zip(ens, ens[1:]))
    worst = 0.0
    for lam in (0.2, 0.3, 0.4, 0.45):
        measured = log_negativity(make_tmsv(TmsvParams(lam), CUTOFF))
        worst = max(worst, abs(measured - np.log2((1 + lam) / (1 - lam))))
    lam = 0.6
    deficit = np.log2((1 + lam) / (1 - lam)) - log_negativity(
        make_tmsv(TmsvParams(lam), CUTOFF)
    )
    law = np.log2((1 + lam**11) / (1 - lam**11))
    law_err = abs(deficit / law - 1.0)
    ok = monotone and worst < 1e-3 and law_err < 0.02
    _verdict("07 entanglement distillation", ok,
             "monotone in k at 4 losses=%s, analytic residual %.2e < 1e-3 "
             "(lam <= 0.45), lam=0.6 deficit %.2e matches truncation law "
             "to %.1e rel" % (monotone, worst, deficit, law_err))


def test_08_non_gaussian_signatures(tmsv_half):
    """Added photons leave measurable non-Gaussian fingerprints.

    Every local quadrature marginal must have kurtosis < 3 for k >= 1;
    the Wigner function of the added mode at the origin must alternate
    sign with k and match (1/pi)(-1)^k [(1-lam^2)/(1+lam^2)]^(k+1);
    the joint quadrature table must show exactly k+1 lobes along the
    x = y cross-section.
    """
    origin_grid = PhaseSpaceGrid(-0.16, 0.16, 0.08)
    ok = True
    w_resid = 0.0
    kurt_max = 0.0
    lobes_seen = []
    for k in range(4):
        state, _ = add_photons(tmsv_half, Mode.A, k)
        w00 = wigner(state, Mode.A, origin_grid).origin_value
        closed = (1.0 / np.pi) * (-1.0) ** k * 0.6 ** (k + 1)
        w_resid = max(w_resid, abs(w00 - closed))
        ok = ok and np.sign(w00) == (-1.0) ** k
        dist = joint_quadrature_distribution(state, 0.0, 0.0, QuadratureGrid())
        lobes = count_density_lobes(np.diagonal(dist.table).copy())
        lobes_seen.append(lobes)
        ok = ok and lobes == k + 1
        if k >= 1:
            for mode in (Mode.A, Mode.B):
                for theta in (0.0, 0.5 * np.pi):
                    kurt_max = max(kurt_max, kurtosis(state, mode, theta))
    # the closed form is exact only below the truncation; the k = 3
    # tail costs ~1e-4 at this cutoff
    ok = ok and kurt_max < 3.0 and w_resid < 1e-3
    _verdict("08 non-gaussian signatures", ok,
             "max marginal kurtosis %.3f < 3 (k >= 1), W(0,0) alternates and "
             "matches closed form to %.1e, lobes %s == k+1"
             % (kurt_max, w_resid, lobes_seen))


def test_09_ber_improvement(tmsv_half):
    """MAP-decoded sign keys improve with photon addition.

    Monte Carlo at 1e6 samples: BER(k=1) <= BER(k=0) + 3 sigma at
    every tested loss, and at lam = 0.6 some k >= 1 reaches BER < 10%
    at T = 1.
    """
    ok = True
    parts = []
    for loss_db in (0.0, 1.0, 3.0, 7.0, 10.0):
        t = 10.0 ** (-loss_db / 10.0)
        bers = []
        for k in (0, 1):
            state, _ = add_photons(tmsv_half, Mode.A, k)
            state = loss_channel(state, Mode.B, ChannelParams(t))
            bers.append(bit_error_rate(state, config=BerConfig(1_000_000, 3003)))
        (b0, s0), (b1, s1) = bers
        bar = 3.0 * float(np.hypot(s0, s1))
        ok = ok and b1 <= b0 + bar
        parts.append("%gdB %+.1e" % (loss_db, b1 - b0))
    source = make_tmsv(TmsvParams(0.6), Cutoff(14))
    best_k, best_exact = min(
        ((k, exact_error_probability(joint_quadrature_distribution(
            add_photons(source, Mode.A, k)[0], 0.0, 0.0, QuadratureGrid())))
         for k in (1, 2, 3)),
        key=lambda item: item[1],
    )
    state, _ = add_photons(source, Mode.A, best_k)
    ber, _ = bit_error_rate(state, config=BerConfig(1_000_000, 3003))
    ok = ok and ber < 0.10
    _verdict("09 ber improvement", ok,
             "BER(k1)-BER(k0) at loss {%s}, all <= 3 sigma; lam=0.6 k=%d "
             "BER=%.4f < 0.10 (exact %.4f)"
             % (", ".join(parts), best_k, ber, best_exact))


def test_10_numerical_hygiene(tmsv_half, tmp_path):
    """Grid stability, likelihood monotonicity, invariants, determinism.

    Halving the quadrature grid step moves the mutual information and
    Holevo bound by under 1e-3 bits; reconstruction log-likelihoods
    never decrease; reconstructed states survive the serialization
    round trip with unit trace, hermiticity, and positivity; the full
    default sweep is byte-for-byte reproducible.
    """
    state, _ = add_photons(tmsv_half, Mode.A, 1)
    state = loss_channel(state, Mode.B, ChannelParams(0.75))
    coarse = QuadratureGrid(-10.0, 10.0, 0.05)
    fine = QuadratureGrid(-10.0, 10.0, 0.025)
    d_mi = abs(
        mutual_information(joint_quadrature_distribution(state, 0.0, 0.0, coarse))
        - mutual_information(joint_quadrature_distribution(state, 0.0, 0.0, fine))
    )
    d_chi = abs(holevo_bound(state, 0.0, coarse) - holevo_bound(state, 0.0, fine))
    grid_ok = d_mi < 1e-3 and d_chi < 1e-3

    if not _RECONSTRUCTIONS:
        # keep the gate meaningful when this test runs alone
        records = sample_records(tmsv_half, 50_000, rng_seed=1001)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _RECONSTRUCTIONS.append(
                reconstruct(records, CUTOFF, MleConfig(max_iterations=40))
            )
    ll_ok = True
    emit_ok = True
    for est, diag in _RECONSTRUCTIONS:
        ll_ok = ll_ok and bool(
            np.all(np.diff(diag.log_likelihoods) >= -1e-9)
        )
        path = tmp_path / "state.json"
        state_to_json(est, path)
        loaded = state_from_json(path)
        eigs = np.linalg.eigvalsh(loaded.entries)
        emit_ok = emit_ok and (
            abs(np.trace(loaded.entries).real - 1.0) < 1e-9
            and np.allclose(loaded.entries, loaded.entries.conj().T)
            and eigs.min() > -1e-9
        )

    config = load_config(None)
    out_a = tmp_path / "sweep_a"
    out_b = tmp_path / "sweep_b"
    manifest_a = run_sweep(config, out_a, workers=1)
    manifest_b = run_sweep(config, out_b, workers=1)
    sweep_ok = (
        manifest_a["n_failed"] == 0
        and manifest_b["n_failed"] == 0
        and filecmp.cmp(out_a / "sweep.csv", out_b / "sweep.csv", shallow=False)
    )
    ok = grid_ok and ll_ok and emit_ok and sweep_ok
    _verdict("10 numerical hygiene", ok,
             "grid halving dI=%.1e dchi=%.1e < 1e-3, log-likelihood monotone=%s, "
             "%d emitted states pass invariants=%s, default sweep byte-identical=%s"
             % (d_mi, d_chi, ll_ok, len(_RECONSTRUCTIONS), emit_ok, sweep_ok))
