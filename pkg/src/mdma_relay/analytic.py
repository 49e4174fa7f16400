"""Closed-form per-step outage probabilities.

The relay stage is modelled per cascaded path as a gated exponential: with
probability ``gate_prob`` the relay failed to decode the broadcast and
contributes nothing (a point mass at zero), otherwise its forwarded SNR at
the destination is exponential with the relay-to-destination rate.  The sum
over the random decode set has a defective CDF obtained by expanding the
product of the per-path transforms over nonempty relay subsets; each subset
contributes a distinct-rate exponential-sum CDF whose coefficients are
products of pairwise pole ratios.  The second-step outage then follows from
binning that CDF and the threshold-conditioned direct-link SNR on a common
grid and convolving the two mass functions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .topology import ConfigError, LinkParam, NetworkTopology, SystemConfig, link_rates

MAX_RELAYS_CLOSED_FORM = 20
RATE_TIE_RTOL = 1e-9
TIE_NUDGE = 1e-7


class RateTieError(ValueError):
    """Two relay-destination rates coincide; the distinct-rate expansion is
    undefined.  Re-run with ``perturb_ties=True`` or use the numeric
    convolution fallback."""


class RelayCountError(ValueError):
    """Subset enumeration refused (2**m terms)."""


class ConditioningError(ValueError):
    """A conditional quantity is undefined for these inputs."""


@dataclass(frozen=True)
class GatedExponential:
    """Point mass ``gate_prob`` at zero plus an exponential tail."""

    gate_prob: float
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.gate_prob <= 1.0:
            raise ConfigError(f"gate_prob must lie in [0, 1], got {self.gate_prob}")
        if not self.rate > 0:
            raise ConfigError(f"rate must be positive, got {self.rate}")

    def mgf(self, s):
        """Laplace-domain transform gate + (1 - gate) * rate / (s + rate).

        The product over paths is the transform of the relay sum; the subset
        expansion is its exact inversion.
        """
        return self.gate_prob + (1.0 - self.gate_prob) * self.rate / (np.asarray(s) + self.rate)


def direct_outage(link: LinkParam, gamma_th: float) -> float:
    """Probability the link SNR falls below the threshold: 1 - exp(-rate*g)."""
    if gamma_th < 0:
        raise ConfigError(f"gamma_th must be nonnegative, got {gamma_th}")
    return -math.expm1(-link.rate_lambda * gamma_th)


def decode_fail_probs(
    topology: NetworkTopology, config: SystemConfig, source: int
) -> np.ndarray:
    """Per-relay probability of failing to decode the source broadcast."""
    rates = link_rates(topology, config, source)
    return -np.expm1(-rates.source_relay * config.gamma_th)


def partial_fraction_coeff(d_x: float, d_y: float, alpha: float) -> float:
    """Mixing coefficient d_y**a / (d_y**a - d_x**a) of a distinct-rate pair.

    Satisfies coeff(x,y) + coeff(y,x) == 1; undefined for equal powered
    distances.
    """
    px, py = d_x**alpha, d_y**alpha
    return _pf_coeff_from_rates(px, py)


def _pf_coeff_from_rates(rate_x: float, rate_y: float) -> float:
    # Rates share the common 1/snr factor, so powered distances cancel it.
    if math.isclose(rate_x, rate_y, rel_tol=RATE_TIE_RTOL, abs_tol=0.0):
        raise RateTieError(
            f"rates {rate_x} and {rate_y} coincide within {RATE_TIE_RTOL:g}"
        )
    return rate_y / (rate_y - rate_x)


def _kahan_sum(terms: np.ndarray) -> float:
    """Compensated sum in descending magnitude (terms alternate in sign)."""
    order = np.argsort(-np.abs(terms), kind="stable")
    total = 0.0
    carry = 0.0
    for t in terms[order]:
        y = float(t) - carry
        s = total + y
        carry = (s - total) - y
        total = s
    return total


@dataclass(frozen=True)
class SubsetTerm:
    """One nonempty decode set: its probability and exponential-CDF mixture."""

    members: tuple[int, ...]
    weight: float
    coeffs: np.ndarray  # aligned with members; CDF term sum_k coeffs[k]*(1-exp(-rate_k*g))


@dataclass(frozen=True)
class DefectiveCdf:
    """CDF of the relay-sum SNR restricted to a nonempty decode set.

    Evaluates to 0 at 0 and to ``total_mass`` (one minus the all-gates-closed
    probability) at infinity.  ``coeff_per_rate`` aggregates every subset term
    so evaluation is O(m); the per-subset expansion is kept for inspection.
    """

    rates: np.ndarray
    gate_probs: np.ndarray
    coeff_per_rate: np.ndarray
    total_mass: float
    subset_terms: tuple[SubsetTerm, ...] = field(repr=False)

    def __call__(self, gamma) -> np.ndarray | float:
        g = np.asarray(gamma, dtype=float)
        out = -np.expm1(-np.multiply.outer(g, self.rates)) @ self.coeff_per_rate
        return float(out) if np.isscalar(gamma) else out


def relay_sum_cdf(gates: list[GatedExponential], perturb_ties: bool = False) -> DefectiveCdf:
    """Closed-form defective CDF of the decoded relays' summed SNR.

    Enumerates every nonempty relay subset; a subset's CDF is the
    distinct-rate exponential-sum mixture with pairwise pole-ratio
    coefficients.  Rates tied within 1e-9 raise ``RateTieError`` unless
    ``perturb_ties`` nudges them apart multiplicatively (documented
    approximation for geometries with coincident relay distances).
    """
    m = len(gates)
    if m < 1:
        raise ConfigError("at least one relay path is required")
    if m > MAX_RELAYS_CLOSED_FORM:
        raise RelayCountError(
            f"{m} relays would need {2**m - 1} subset terms; "
            f"use the numeric convolution fallback beyond m={MAX_RELAYS_CLOSED_FORM}"
        )
    a = np.array([g.gate_prob for g in gates])
    lam = np.array([g.rate for g in gates], dtype=float)
    lam = _resolve_ties(lam, perturb_ties)

    theta = np.zeros((m, m))
    for x in range(m):
        for y in range(m):
            if x != y:
                theta[x, y] = lam[y] / (lam[y] - lam[x])

    subset_terms = []
    per_rate = [[] for _ in range(m)]
    for k in range(1, m + 1):
        for members in itertools.combinations(range(m), k):
            idx = np.array(members)
            outside = np.setdiff1d(np.arange(m), idx, assume_unique=True)
            weight = float(np.prod(1.0 - a[idx]) * np.prod(a[outside]))
            coeffs = np.array(
                [np.prod(theta[x, [y for y in members if y != x]]) for x in members]
            )
            subset_terms.append(SubsetTerm(members, weight, coeffs))
            for x, c in zip(members, coeffs):
                per_rate[x].append(weight * c)

    coeff_per_rate = np.array([_kahan_sum(np.array(ts)) for ts in per_rate])
    total_mass = float(1.0 - np.prod(a))
    return DefectiveCdf(
        rates=lam,
        gate_probs=a,
        coeff_per_rate=coeff_per_rate,
        total_mass=total_mass,
        subset_terms=tuple(subset_terms),
    )


def _resolve_ties(lam: np.ndarray, perturb: bool) -> np.ndarray:
    order = np.argsort(lam)
    s = lam[order]
    tied = np.isclose(s[1:], s[:-1], rtol=RATE_TIE_RTOL, atol=0.0)
    if not tied.any():
        return lam
    if not perturb:
        raise RateTieError(
            "relay-destination rates tie within 1e-9; pass perturb_ties=True "
            "to nudge them apart or use the numeric convolution fallback"
        )
    out = lam.astype(float).copy()
    # Nudge every member of a tie group by a distinct multiplicative factor.
    groups: list[list[int]] = [[int(order[0])]]
    for pos in range(1, len(s)):
        if tied[pos - 1]:
            groups[-1].append(int(order[pos]))
        else:
            groups.append([int(order[pos])])
    for group in groups:
        if len(group) == 1:
            continue
        for k, idx in enumerate(group):
            sign = 1.0 if k % 2 == 0 else -1.0
            out[idx] *= 1.0 + sign * (1 + k // 2) * TIE_NUDGE
    return out


@dataclass(frozen=True)
class BinnedPmf:
    """Probabilities of equal SNR bins of width gamma_th/granularity.

    Bin j (1-based) covers ((j-1)*gamma_th/n, j*gamma_th/n].  Entries are
    nonnegative and total at most 1; conditioned or defective distributions
    are expected.
    """

    probs: np.ndarray
    gamma_th: float
    granularity: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if (p < -1e-15).any():
            raise ConfigError("bin probabilities must be nonnegative")
        if p.sum() > 1.0 + 1e-9:
            raise ConfigError("bin probabilities must total at most 1")
        object.__setattr__(self, "probs", np.maximum(p, 0.0))

    @property
    def total(self) -> float:
        return float(self.probs.sum())


def bin_relay_sum(cdf: DefectiveCdf, gamma_th: float, granularity: int) -> BinnedPmf:
    """CDF increments of the relay sum over the threshold interval.

    The partial-fraction coefficients alternate in sign, so evaluating the
    CDF carries absolute noise of order eps * sum(|coefficients|); increments
    below that floor are clamped to zero, anything more negative is a bug.
    """
    if granularity < 1:
        raise ConfigError("granularity must be at least 1")
    edges = cdf(np.linspace(0.0, gamma_th, granularity + 1))
    diffs = np.diff(edges)
    noise = 64.0 * np.finfo(float).eps * max(1.0, float(np.abs(cdf.coeff_per_rate).sum()))
    if (diffs < -noise).any():
        raise ConfigError(
            f"relay-sum CDF decreased by more than the noise floor {noise:.3e}"
        )
    return BinnedPmf(np.maximum(diffs, 0.0), gamma_th, granularity)


def bin_conditional_direct(
    link: LinkParam, gamma_th: float, granularity: int
) -> BinnedPmf:
    """Mass function of the direct SNR conditioned below the threshold."""
    if granularity < 1:
        raise ConfigError("granularity must be at least 1")
    if gamma_th <= 0:
        raise ConditioningError(
            "conditioning on SNR below a zero threshold is undefined"
        )
    # Factored form keeps full precision when rate*gamma_th is tiny.
    lam = link.rate_lambda
    width = gamma_th / granularity
    lower = np.exp(-lam * width * np.arange(granularity))
    seg = -math.expm1(-lam * width)
    denom = -math.expm1(-lam * gamma_th)
    return BinnedPmf(lower * (seg / denom), gamma_th, granularity)


def step2_outage(relay_pmf: BinnedPmf, direct_pmf: BinnedPmf, gates) -> float:
    """Failure probability of the relay-forwarding step.

    Convolves the relay-sum and conditioned-direct mass functions and keeps
    output bins 1..n, then renormalizes by the nonempty-decode-set
    probability.  Summing raw convolution indices up to n undercounts the
    boundary band, a documented O(1/n) bias of this estimator.
    """
    if relay_pmf.granularity != direct_pmf.granularity or not math.isclose(
        relay_pmf.gamma_th, direct_pmf.gamma_th
    ):
        raise ConfigError("both mass functions must share gamma_th and granularity")
    gate_probs = np.asarray([g.gate_prob for g in gates], dtype=float)
    empty_prob = float(np.prod(gate_probs))
    if empty_prob >= 1.0:
        raise ConditioningError(
            "no relay can ever decode; the relay step is unreachable"
        )
    n = relay_pmf.granularity
    combined = np.convolve(relay_pmf.probs, direct_pmf.probs)
    # Raw convolution index k (0-based) holds bin-index sum k+2.
    below = float(combined[: max(n - 1, 0)].sum())
    return min(max(below / (1.0 - empty_prob), 0.0), 1.0)


@dataclass(frozen=True)
class StepOutageSet:
    """Per-step outage probabilities of the three-phase protocol.

    The shared phase and the first personalized phase are both carried by
    source 1, so their values coincide; the second personalized phase swaps
    in source 2's distances and decode gates.
    """

    shared_bcast: float
    shared_relay: float
    personal1_bcast: float
    personal1_relay: float
    personal2_bcast: float
    personal2_relay: float
    empty_set_prob_s1: float
    empty_set_prob_s2: float

    def __post_init__(self):
        for name in (
            "shared_bcast",
            "shared_relay",
            "personal1_bcast",
            "personal1_relay",
            "personal2_bcast",
            "personal2_relay",
            "empty_set_prob_s1",
            "empty_set_prob_s2",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {v}")

    def by_step(self, phase: str, step: int) -> float:
        return getattr(self, f"{phase}_{'bcast' if step == 1 else 'relay'}")


def source_step_outages(
    topology: NetworkTopology,
    config: SystemConfig,
    source: int,
    perturb_ties: bool = False,
    numeric_fallback: bool = False,
) -> tuple[float, float, float]:
    """(broadcast outage, relay-step outage, empty-set probability) for one source.

    ``numeric_fallback`` bins the relay sum by convolving per-path masses
    instead of expanding subsets; it has no relay-count cap and tolerates
    tied rates.
    """
    if math.isinf(config.snr_linear()):
        return 0.0, 0.0, 0.0
    rates = link_rates(topology, config, source)
    gamma_th = config.gamma_th
    fails = decode_fail_probs(topology, config, source)
    bcast = direct_outage(LinkParam(rates.direct), gamma_th)
    gates = [GatedExponential(a, r) for a, r in zip(fails, rates.relay_dest)]
    empty = float(np.prod(fails))
    if gamma_th == 0.0:
        # Zero threshold: every reception succeeds and the relay step never runs.
        return 0.0, 0.0, 0.0
    if empty >= 1.0:
        return bcast, 1.0, empty
    if numeric_fallback:
        relay_pmf = numeric_relay_sum_pmf(gates, gamma_th, config.granularity)
    else:
        cdf = relay_sum_cdf(gates, perturb_ties=perturb_ties)
        relay_pmf = bin_relay_sum(cdf, gamma_th, config.granularity)
    direct_pmf = bin_conditional_direct(
        LinkParam(rates.direct), gamma_th, config.granularity
    )
    relay = step2_outage(relay_pmf, direct_pmf, gates)
    return bcast, relay, empty


def step_outages(
    topology: NetworkTopology,
    config: SystemConfig,
    perturb_ties: bool = False,
    numeric_fallback: bool = False,
) -> StepOutageSet:
    """All six per-step outage probabilities of the protocol."""
    b1, r1, e1 = source_step_outages(topology, config, 1, perturb_ties, numeric_fallback)
    b2, r2, e2 = source_step_outages(topology, config, 2, perturb_ties, numeric_fallback)
    return StepOutageSet(
        shared_bcast=b1,
        shared_relay=r1,
        personal1_bcast=b1,
        personal1_relay=r1,
        personal2_bcast=b2,
        personal2_relay=r2,
        empty_set_prob_s1=e1,
        empty_set_prob_s2=e2,
    )


# ---------------------------------------------------------------------------
# Numeric convolution fallback (also the oracle for the closed form).
# ---------------------------------------------------------------------------

def numeric_relay_sum_cdf(
    gates: list[GatedExponential], gammas, bins: int = 1 << 15
) -> np.ndarray:
    """Relay-sum CDF by grid-point-binned convolution of the gated paths.

    Independent of the subset expansion; serves as the fallback for tied
    rates or more than 20 relays, and as the cross-check oracle.  Continuous
    mass is snapped to grid points k*h (nearest-point binning) so convolution
    index arithmetic is exact; the CDF is then known at half-grid points with
    O(h**2) error and interpolated for arbitrary queries.
    """
    gammas = np.asarray(gammas, dtype=float)
    gmax = float(gammas.max()) if gammas.size else 1.0
    if gmax <= 0:
        gmax = 1.0
    h = gmax / bins
    cuts = (np.arange(bins + 1) - 0.5) * h
    cuts[0] = 0.0
    atom = 1.0
    total = np.zeros(bins)
    for g in gates:
        surv = np.exp(-g.rate * cuts)
        part = (1.0 - g.gate_prob) * (surv[:-1] - surv[1:])
        conv = np.convolve(total, part)[:bins]
        total = conv + atom * part + g.gate_prob * total
        atom *= g.gate_prob
    cum = np.cumsum(total)
    half = (np.arange(bins) + 0.5) * h
    return np.interp(gammas, half, cum, left=0.0, right=float(cum[-1]))


def numeric_relay_sum_pmf(
    gates: list[GatedExponential], gamma_th: float, granularity: int
) -> BinnedPmf:
    """Relay-sum bin masses built by convolving per-path bin masses.

    Each gated path is binned on the threshold grid exactly as the closed
    form is, then the binned masses are convolved (raw convolution indices,
    matching the relay-step estimator's convention); mirrors inverting the
    product transform numerically with O(1/granularity) displacement error.
    """
    n = granularity
    edges = np.linspace(0.0, gamma_th, n + 1)
    acc = np.zeros(n)
    atom = 1.0
    for g in gates:
        seg = (1.0 - g.gate_prob) * (
            np.exp(-g.rate * edges[:-1]) - np.exp(-g.rate * edges[1:])
        )
        shifted = np.concatenate(([0.0], np.convolve(acc, seg)))[:n]
        acc = shifted + atom * seg + g.gate_prob * acc
        atom *= g.gate_prob
    return BinnedPmf(acc, gamma_th, n)
