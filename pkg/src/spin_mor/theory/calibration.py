"""
Calibration of raw spinometer parameters from physical targets.

Maps Bloch relaxation rates, test-mass temperature and quality, and
observation noise PSDs onto the spinometer phases theta, the feedback
gain alpha and the click rate r. All quantities are in code units with
hbar = 1.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .thermal import alpha_from_beta

logger = logging.getLogger(__name__)

OBSERVATION_KINDS = ('spin_z', 'mass_q')


@dataclass(frozen=True)
class BlochCalibration:
    """Spin-1/2 triaxial closed-loop spinometer reproducing target Bloch rates."""

    alpha: float
    click_rate: float
    theta_x: float
    theta_y: float
    theta_z: float
    epsilons: Tuple[float, float, float]
    rates: Tuple[float, float, float]
    beta: float
    branch: str = 'small'

    @property
    def thetas(self) -> Tuple[float, float, float]:
        return (self.theta_x, self.theta_y, self.theta_z)

    @property
    def dt(self) -> float:
        return 1.0 / self.click_rate

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class TestMassCalibration:
    """Large-j spinometer standing in for a thermally damped test mass."""

    __test__ = False

    alpha: float
    click_rate: float
    j_theta_sq: float
    epsilon: float
    beta: float
    Q: float
    omega0: float
    k: float = 1.0

    def theta(self, j: float) -> float:
        """Spinometer phase for a chosen (large) spin j."""
        return float(np.sqrt(self.j_theta_sq / j))

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class ObservationCalibration:
    """Feedback-free observation of a spin z-component or a test-mass coordinate."""

    kind: str
    click_rate: float
    epsilon: float
    noise_psd: float
    theta: Optional[float] = None
    j_theta_sq: Optional[float] = None
    j: float = 0.5
    k: float = 1.0
    omega0: float = 1.0

    @property
    def gain(self) -> float:
        """Spinometer gain g_s = 2 theta j."""
        if self.theta is not None:
            return 2 * self.theta * self.j
        return 2 * np.sqrt(self.j_theta_sq * self.j)

    def to_dict(self) -> Dict:
        return asdict(self)


# Bloch equations --------------------------------------------------------------


def bloch_rates(
    theta_x: float, theta_y: float, theta_z: float, alpha: float, click_rate: float
) -> Tuple[float, float, float]:
    """
    Relaxation rates produced by a spin-1/2 closed-loop triaxial spinometer.

    Forward map used to check calibrations. The z-pair carries no feedback,
    so it dephases x and y only.

    Returns:
        Tuple (Gamma_x, Gamma_y, Gamma_z)
    """
    a2 = alpha ** 2
    tx2, ty2, tz2 = theta_x ** 2, theta_y ** 2, theta_z ** 2
    gamma_x = 0.5 * click_rate * (a2 * tx2 + ty2 + tz2)
    gamma_y = 0.5 * click_rate * (tx2 + a2 * ty2 + tz2)
    gamma_z = 0.5 * click_rate * (1 + a2) * (tx2 + ty2)
    return gamma_x, gamma_y, gamma_z


def equilibrium_polarization(beta: float) -> float:
    """Thermal equilibrium E[z] = -tanh(beta/2)."""
    return float(-np.tanh(beta / 2))


def _feasibility_violation(Gx: float, Gy: float, Gz: float, beta: float) -> Optional[str]:
    tol = 1e-12 * max(Gx, Gy, Gz)
    lower = abs(Gx - Gy) * np.cosh(beta / 2)
    if lower > Gz + tol:
        return (
            f"lower bound violated: |Gx - Gy| cosh(beta/2) = {lower:.6g} > Gz = {Gz:.6g}"
        )
    if Gz > Gx + Gy + tol:
        return f"upper bound violated: Gz = {Gz:.6g} > Gx + Gy = {Gx + Gy:.6g}"
    return None


def bloch_feasible(Gx: float, Gy: float, Gz: float, beta: float) -> bool:
    """Whether ``|Gx - Gy| cosh(beta/2) <= Gz <= Gx + Gy`` holds."""
    return _feasibility_violation(Gx, Gy, Gz, beta) is None


def calibrate_bloch(
    Gx: float,
    Gy: float,
    Gz: float,
    beta: float,
    eps_max: float = 0.1,
    branch: str = 'small',
    output_rate: Optional[float] = None,
) -> BlochCalibration:
    """
    Spinometer parameters for target relaxation rates at inverse temperature beta.

    The click rate is the smallest one for which the largest epsilon equals
    ``eps_max``. With ``output_rate`` set, r is rounded up to a whole number
    of clicks per output sample and the epsilons shrink accordingly.

    Args:
        Gx, Gy, Gz: Target relaxation rates (positive)
        beta: Inverse temperature in units of the level splitting
        eps_max: Largest allowed epsilon parameter
        branch: 'small' for alpha = -tanh(beta/4), 'reciprocal' for 1/alpha
        output_rate: Optional output sample rate for rounding r

    Returns:
        BlochCalibration

    Raises:
        ValueError: On nonpositive rates or eps_max, or infeasible rates

    Example:
        >>> cal = calibrate_bloch(1.0, 1.0, 1.0, beta=0.0)
        >>> round(cal.click_rate, 6), abs(cal.alpha)
        (25.0, 0.0)
    """
    # Validate inputs
    if min(Gx, Gy, Gz) <= 0:
        raise ValueError(f"Relaxation rates must be positive, got ({Gx}, {Gy}, {Gz})")
    if eps_max <= 0:
        raise ValueError(f"eps_max must be positive, got {eps_max}")
    if output_rate is not None and output_rate <= 0:
        raise ValueError(f"output_rate must be positive, got {output_rate}")

    violation = _feasibility_violation(Gx, Gy, Gz, beta)
    if violation is not None:
        raise ValueError(f"Infeasible Bloch rates at beta={beta}: {violation}")

    alpha = alpha_from_beta(beta, branch)
    a2 = min(alpha ** 2, 1.0 / alpha ** 2) if alpha != 0 else 0.0

    # u, v, w are r*theta^2/2 of the x, y, z pairs on the small branch
    w = 0.5 * (Gx + Gy - Gz)
    total = Gz / (1 + a2)
    split = (Gy - Gx) / (1 - a2) if a2 < 1 else 0.0
    u = max(0.5 * (total + split), 0.0)
    v = max(0.5 * (total - split), 0.0)

    # r * eps^2 for each pair; the z-pair has alpha = 0
    r_eps_sq = np.array([(1 + a2) * u / 2, (1 + a2) * v / 2, w / 2])
    if branch == 'reciprocal':
        r_eps_sq = r_eps_sq[[1, 0, 2]]

    click_rate = float(r_eps_sq.max() / eps_max ** 2)
    if output_rate is not None:
        per_sample = int(np.ceil(click_rate / output_rate - 1e-9))
        click_rate = float(max(per_sample, 1) * output_rate)

    eps_sq = r_eps_sq / click_rate
    gain_sq = (1 + alpha ** 2, 1 + alpha ** 2, 1.0)
    thetas = [float(np.sqrt(4 * e / g)) for e, g in zip(eps_sq, gain_sq)]
    epsilons = tuple(float(np.sqrt(e)) for e in eps_sq)

    logger.info(
        f"Bloch calibration: alpha={alpha:.6g}, r={click_rate:.6g}, "
        f"theta=({thetas[0]:.4g}, {thetas[1]:.4g}, {thetas[2]:.4g})"
    )
    return BlochCalibration(
        alpha=float(alpha),
        click_rate=click_rate,
        theta_x=thetas[0],
        theta_y=thetas[1],
        theta_z=thetas[2],
        epsilons=epsilons,
        rates=(float(Gx), float(Gy), float(Gz)),
        beta=float(beta),
        branch=branch,
    )


# Test mass and observation ----------------------------------------------------


def calibrate_test_mass(
    beta: float,
    Q: float,
    omega0: float,
    eps_max: float = 0.1,
    branch: str = 'small',
) -> TestMassCalibration:
    """
    Closed-loop large-j spinometer reproducing a test mass of quality Q at beta.

    ``eps^2 = omega0 coth(beta/2) / (2 Q r)`` and ``j theta^2 = eps^2/(1+alpha^2)``.

    Raises:
        ValueError: If Q, beta, omega0 or eps_max is not positive

    Example:
        >>> round(calibrate_test_mass(4.0, 100.0, 1.0).alpha, 4)
        -0.7616
    """
    # Validate inputs
    if Q <= 0:
        raise ValueError(f"Quality Q must be positive, got {Q}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if omega0 <= 0:
        raise ValueError(f"omega0 must be positive, got {omega0}")
    if eps_max <= 0:
        raise ValueError(f"eps_max must be positive, got {eps_max}")

    alpha = alpha_from_beta(beta, branch)
    coth = 1.0 / np.tanh(beta / 2)
    click_rate = float(omega0 * coth / (2 * Q * eps_max ** 2))
    eps_sq = omega0 * coth / (2 * Q * click_rate)

    logger.info(f"Test-mass calibration: alpha={alpha:.6g}, r={click_rate:.6g}")
    return TestMassCalibration(
        alpha=float(alpha),
        click_rate=click_rate,
        j_theta_sq=float(eps_sq / (1 + alpha ** 2)),
        epsilon=float(np.sqrt(eps_sq)),
        beta=float(beta),
        Q=float(Q),
        omega0=float(omega0),
    )


def calibrate_observation(
    kind: str,
    noise_psd: float,
    k: float = 1.0,
    omega0: float = 1.0,
    j: float = 0.5,
    eps_max: float = 0.1,
) -> ObservationCalibration:
    """
    Feedback-free observation process with a given one-sided noise PSD.

    Args:
        kind: 'spin_z' (spin-1/2 z polarization) or 'mass_q' (test-mass coordinate)
        noise_psd: One-sided measurement-noise PSD
        k: Spring constant (mass_q only)
        omega0: Resonance frequency (mass_q only)
        j: Spin number used to report the gain
        eps_max: Epsilon parameter to calibrate to

    Returns:
        ObservationCalibration

    Raises:
        ValueError: On an unknown kind or a nonpositive PSD

    Example:
        >>> round(calibrate_observation('spin_z', 50.0).click_rate, 9)
        1.0
    """
    # Validate inputs
    if kind not in OBSERVATION_KINDS:
        raise ValueError(f"Unknown observation kind '{kind}' (use {OBSERVATION_KINDS})")
    if noise_psd <= 0:
        raise ValueError(f"Noise PSD must be positive, got {noise_psd}")
    if eps_max <= 0:
        raise ValueError(f"eps_max must be positive, got {eps_max}")

    eps_sq = eps_max ** 2
    if kind == 'spin_z':
        click_rate = 1.0 / (2 * eps_sq * noise_psd)
        theta = float(np.sqrt(4 * eps_sq))
        cal = ObservationCalibration(
            kind=kind, click_rate=float(click_rate), epsilon=float(eps_max),
            noise_psd=float(noise_psd), theta=theta, j=float(j),
        )
    else:
        if k <= 0 or omega0 <= 0:
            raise ValueError(f"k and omega0 must be positive, got k={k}, omega0={omega0}")
        click_rate = omega0 / (4 * eps_sq * k * noise_psd)
        cal = ObservationCalibration(
            kind=kind, click_rate=float(click_rate), epsilon=float(eps_max),
            noise_psd=float(noise_psd), j_theta_sq=float(eps_sq), j=float(j),
            k=float(k), omega0=float(omega0),
        )

    logger.info(f"Observation calibration ({kind}): r={cal.click_rate:.6g}")
    return cal


def quantum_limit_report(
    cal: Union[TestMassCalibration, ObservationCalibration], k: Optional[float] = None
) -> Dict[str, float]:
    """
    Noise quantities of a calibrated test-mass spinometer.

    ``gamma = 4 k r j theta^2 / omega0`` is the backaction gain and
    ``S_qn = omega0 / (4 k r j theta^2)`` the measurement noise. The force
    noise is reported in its three equivalent forms, and the noise figure
    ``NF = 2 gamma S_qn`` saturates the quantum limit.

    Returns:
        Dict with S_qn, S_fn (= gamma^2 S_qn), S_fn_inverse (= 1/S_qn),
        S_fn_gain (= gamma), gamma, NF and the largest disagreement
    """
    j_theta_sq = cal.j_theta_sq
    if j_theta_sq is None:
        raise ValueError("quantum_limit_report needs a j_theta_sq calibration")
    if k is None:
        k = cal.k
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")

    gamma = 4 * k * cal.click_rate * j_theta_sq / cal.omega0
    s_qn = cal.omega0 / (4 * k * cal.click_rate * j_theta_sq)
    forms = np.array([gamma ** 2 * s_qn, 1.0 / s_qn, gamma])
    return {
        'S_qn': float(s_qn),
        'S_fn': float(forms[0]),
        'S_fn_inverse': float(forms[1]),
        'S_fn_gain': float(forms[2]),
        'gamma': float(gamma),
        'NF': float(2 * gamma * s_qn),
        'max_disagreement': float(forms.max() - forms.min()),
    }
