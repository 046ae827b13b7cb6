import numpy as np
import pytest

from paradiff.schedule import (
    NoiseSchedule, SchedulePoint, add_noise, alpha_sigma, point, snr, transition,
)

COSINE = NoiseSchedule()
SHIFTED = NoiseSchedule(noise_shift=4.0)
BETA = NoiseSchedule(kind="beta-linear")
GRID = np.linspace(1e-3, 1.0, 200)


def test_clean_and_noise_endpoints():
    assert alpha_sigma(COSINE, 0.0) == (1.0, 0.0)
    assert alpha_sigma(COSINE, 1.0) == (0.0, 1.0)


def test_cosine_midpoint_closed_form():
    alpha, sigma = alpha_sigma(COSINE, 0.5)
    assert alpha == pytest.approx(np.sqrt(2) / 2, abs=1e-12)
    assert sigma == pytest.approx(np.sqrt(2) / 2, abs=1e-12)


def test_shift_midpoint_hand_value():
    # base SNR at t=0.5 is 1; divided by 16 gives alpha^2 = 1/17
    alpha, _ = alpha_sigma(SHIFTED, 0.5)
    assert alpha**2 == pytest.approx(1.0 / 17.0, abs=1e-12)


@pytest.mark.parametrize("sched", [COSINE, SHIFTED, BETA,
                                   NoiseSchedule(kind="beta-linear", noise_shift=4.0)])
def test_variance_preservation_on_grid(sched):
    alpha, sigma = alpha_sigma(sched, GRID)
    assert np.max(np.abs(alpha**2 + sigma**2 - 1.0)) < 1e-12


def test_alpha_monotone_nonincreasing():
    for sched in (COSINE, SHIFTED, BETA):
        alpha, _ = alpha_sigma(sched, GRID)
        assert np.all(np.diff(alpha) <= 1e-15)


def test_snr_strictly_decreasing():
    omega = snr(COSINE, GRID)
    assert np.all(np.diff(omega) < 0)


def test_snr_midpoint_is_one():
    assert snr(COSINE, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_snr_shift_identity_exact():
    base = snr(COSINE, GRID)
    shifted = snr(SHIFTED, GRID)
    assert np.array_equal(shifted, base / 16.0)


def test_snr_alpha_roundtrip():
    omega = snr(COSINE, GRID)
    alpha, _ = alpha_sigma(COSINE, GRID)
    a2 = omega / (1.0 + omega)
    assert np.max(np.abs(a2 - alpha**2) / np.maximum(alpha**2, 1e-30)) < 1e-12


def test_snr_requires_t_min():
    with pytest.raises(ValueError):
        snr(COSINE, 1e-4)


def test_alpha_sigma_rejects_out_of_range():
    with pytest.raises(ValueError):
        alpha_sigma(COSINE, -0.1)
    with pytest.raises(ValueError):
        alpha_sigma(COSINE, 1.1)


def test_schedule_point_invariant():
    p = point(COSINE, 0.3)
    assert isinstance(p, SchedulePoint)
    assert p.alpha**2 + p.sigma**2 == pytest.approx(1.0, abs=1e-12)
    assert p.snr == pytest.approx(p.alpha**2 / p.sigma**2, rel=1e-12)


def test_transition_identity_limit():
    a_ts, sig_ts = transition(COSINE, 0.5, 0.5 + 1e-9)
    assert a_ts == pytest.approx(1.0, abs=1e-8)
    assert sig_ts == pytest.approx(0.0, abs=1e-4)


def test_transition_from_near_zero_recovers_marginal():
    a_ts, sig_ts = transition(COSINE, COSINE.t_min, 0.7)
    a, s = alpha_sigma(COSINE, 0.7)
    assert a_ts == pytest.approx(a, abs=1e-5)
    assert sig_ts == pytest.approx(s, abs=1e-5)


def test_transition_rejects_bad_order():
    with pytest.raises(ValueError):
        transition(COSINE, 0.7, 0.5)


@pytest.mark.parametrize("sched", [COSINE, SHIFTED, BETA])
def test_transition_marginal_consistency_grid(sched):
    ss = np.linspace(sched.t_min, 0.98, 25)
    for s in ss:
        for t in np.linspace(s + 0.01, 1.0, 12):
            a_s, sig_s = alpha_sigma(sched, s)
            a_t, sig_t = alpha_sigma(sched, t)
            a_ts, sig_ts = transition(sched, s, t)
            assert abs(a_ts * a_s - a_t) < 1e-12
            assert abs(a_ts**2 * sig_s**2 + sig_ts**2 - sig_t**2) < 1e-12


def test_add_noise_zero_noise():
    z = np.ones((2, 3))
    out = add_noise(z, 0.25, np.zeros_like(z), COSINE)
    alpha, _ = alpha_sigma(COSINE, 0.25)
    assert np.array_equal(out, alpha * z)


def test_add_noise_pure_noise_endpoint():
    z = np.full((4, 4), 3.3)
    eps = np.random.default_rng(0).standard_normal((4, 4))
    assert np.array_equal(add_noise(z, 1.0, eps, COSINE), eps)


def test_add_noise_shape_mismatch():
    with pytest.raises(ValueError):
        add_noise(np.ones((2, 2)), 0.5, np.ones(3), COSINE)


def test_add_noise_marginal_variance_monte_carlo(rng):
    # empirical std of z_t - alpha z over many draws matches sigma_t
    t = 0.37
    _, sigma = alpha_sigma(COSINE, t)
    z = np.zeros(100_000)
    eps = rng.standard_normal(100_000)
    z_t = add_noise(z, t, eps, COSINE)
    assert np.var(z_t) == pytest.approx(sigma**2, rel=0.02)


def test_transition_composition_matches_marginal_monte_carlo(rng):
    # corrupting to s then applying the s->t transition kernel must be
    # distributed like corrupting straight to t
    s_time, t_time = 0.3, 0.8
    n = 100_000
    z = 1.7
    a_s, sig_s = alpha_sigma(COSINE, s_time)
    a_t, sig_t = alpha_sigma(COSINE, t_time)
    z_s = a_s * z + sig_s * rng.standard_normal(n)
    a_ts, sig_ts = transition(COSINE, s_time, t_time)
    z_t = a_ts * z_s + sig_ts * rng.standard_normal(n)
    # mean and variance each within 3 standard errors of the marginal
    se_mean = sig_t / np.sqrt(n)
    assert abs(z_t.mean() - a_t * z) < 3 * se_mean
    se_var = sig_t**2 * np.sqrt(2.0 / n)
    assert abs(z_t.var() - sig_t**2) < 3 * se_var


def test_beta_linear_endpoints_and_monotone():
    alpha, sigma = alpha_sigma(BETA, np.array([0.0, 1.0]))
    assert alpha[0] == 1.0 and sigma[0] == 0.0
    assert alpha[1] < 0.01  # nearly pure noise at t=1
    omega = snr(BETA, GRID)
    assert np.all(np.diff(omega) < 0)


def test_schedule_serialization_roundtrip():
    sched = NoiseSchedule(kind="beta-linear", noise_shift=4.0, t_min=1e-3)
    assert NoiseSchedule.from_dict(sched.to_dict()) == sched


def test_bad_kind_rejected():
    with pytest.raises(ValueError):
        NoiseSchedule(kind="quadratic")
    with pytest.raises(ValueError):
        NoiseSchedule(noise_shift=0.0)
