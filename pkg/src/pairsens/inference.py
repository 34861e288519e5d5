"""Changepoint search, sensitivity intervals, and design sensitivity.

The changepoint is the smallest bias bound at which a test stops rejecting;
sensitivity intervals invert the one-sided tests over the hypothesized
value.  Both searches bisect a reject indicator evaluated with common random
numbers (one engine seed reused at every point), making the indicator a
deterministic function of the search variable; non-monotone indicators are
detected on a grid and reported, never silently resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import PairedSample, SensitivityParam, TestSpec
from .randdist import EnumSpec
from .testing import run_test

__all__ = [
    "ChangepointResult",
    "DesignSensitivityResult",
    "SensitivityInterval",
    "changepoint_gamma",
    "design_sensitivity",
    "sensitivity_interval",
]


@dataclass(frozen=True)
class ChangepointResult:
    """Smallest bias bound at which the chosen test stops rejecting.

    ``bracket`` is ``(gamma_low, gamma_high)`` with a rejection at the low
    end and none at the high end; when the search converged normally its
    width is at most ``tolerance``.  ``rejects_at_gamma_one`` False means the
    test already fails to reject in the randomized-experiment case and the
    changepoint is reported as 1.  ``exceeded_gamma_max`` True means
    rejection persisted through ``gamma_max`` and the changepoint is +inf
    (read: greater than ``gamma_max``).
    """

    gamma_changepoint: float
    bracket: tuple[float, float]
    tolerance: float
    method: str
    tau: float
    alpha: float
    alternative: str
    rejects_at_gamma_one: bool
    exceeded_gamma_max: bool
    monotone: bool
    inversions: tuple[tuple[float, float], ...]
    n_evaluations: int

    def __post_init__(self):
        lo, hi = self.bracket
        if self.rejects_at_gamma_one and not self.exceeded_gamma_max:
            if hi - lo > self.tolerance * (1 + 1e-9):
                raise ValueError("converged bracket wider than tolerance")


@dataclass(frozen=True)
class SensitivityInterval:
    """Interval of hypothesized values not rejected at a given bias bound.

    Endpoints are reported at the non-rejecting edge of a bracket of width
    at most ``tol``; they may be infinite when the corresponding one-sided
    test never rejects.
    """

    gamma: float
    lower: float
    upper: float
    confidence: float
    method: str
    tol: float
    lower_bracket: tuple[float, float]
    upper_bracket: tuple[float, float]
    non_monotone: bool = False

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("interval lower endpoint exceeds upper endpoint")


@dataclass(frozen=True)
class DesignSensitivityResult:
    """Bias bound at which large-sample power transitions from 1 to 0.

    ``gamma_tilde`` is ``(E|Y - tau| + |mean - tau|) / (E|Y - tau| - |mean - tau|)``,
    equivalently the bound whose worst-case expectation of the bias-corrected
    mean crosses zero.  Reported as +inf when the absolute moment does not
    exceed the mean shift.  ``source`` records whether the moments were
    supplied analytically or estimated from a sample by plug-in.
    """

    gamma_tilde: float
    tau: float
    mean: float
    abs_moment: float
    source: str
    note: Union[str, None] = None


def changepoint_gamma(
    sample: PairedSample,
    tau: float,
    alpha: float = 0.05,
    method: str = "studentized",
    engine: Union[EnumSpec, None] = None,
    gamma_max: float = 1000.0,
    tol: float = 1e-3,
    alternative: str = "greater",
    grid_points: int = 50,
) -> ChangepointResult:
    """Bisect the reject indicator over the bias bound.

    Bisection runs on [1, gamma_max], switching to geometric midpoints above
    10 since the bound lives on an odds-ratio scale.  A post-hoc scan over a
    coarse geometric grid checks that the indicator is monotone; if a
    rejection reappears past the bracket, the changepoint is moved to the
    supremum of rejecting grid points and refined locally, and the
    inversions are reported in the result.
    """
    if gamma_max <= 1.0:
        raise ValueError("gamma_max must exceed 1")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    engine = engine or EnumSpec()
    evals = 0

    def rejects(g: float) -> bool:
        nonlocal evals
        evals += 1
        spec = TestSpec(tau=tau, alpha=alpha, alternative=alternative, method=method)
        return run_test(sample, spec, SensitivityParam(g), engine).reject

    common = dict(
        tolerance=tol,
        method=method,
        tau=tau,
        alpha=alpha,
        alternative=alternative,
    )
    if not rejects(1.0):
        return ChangepointResult(
            gamma_changepoint=1.0,
            bracket=(1.0, 1.0),
            rejects_at_gamma_one=False,
            exceeded_gamma_max=False,
            monotone=True,
            inversions=(),
            n_evaluations=evals,
            **common,
        )
    if rejects(gamma_max):
        return ChangepointResult(
            gamma_changepoint=math.inf,
            bracket=(gamma_max, math.inf),
            rejects_at_gamma_one=True,
            exceeded_gamma_max=True,
            monotone=True,
            inversions=(),
            n_evaluations=evals,
            **common,
        )

    def bisect(lo: float, hi: float) -> tuple[float, float]:
        while hi - lo > tol:
            mid = math.sqrt(lo * hi) if lo >= 10.0 else 0.5 * (lo + hi)
            if not (lo < mid < hi):
                mid = 0.5 * (lo + hi)
            if not (lo < mid < hi):
                break
            if rejects(mid):
                lo = mid
            else:
                hi = mid
        return lo, hi

    lo, hi = bisect(1.0, gamma_max)

    inversions: list[tuple[float, float]] = []
    if grid_points >= 2:
        scan_hi = min(gamma_max, max(2.0 * hi, hi + 1.0))
        grid = np.geomspace(1.0, scan_hi, grid_points)
        flags = [rejects(float(g)) for g in grid]
        last_false: Union[float, None] = None
        for g, f in zip(grid, flags):
            if not f:
                last_false = float(g)
            elif last_false is not None:
                inversions.append((last_false, float(g)))
        if inversions:
            rejecting = [float(g) for g, f in zip(grid, flags) if f]
            top = max(rejecting)
            if top > lo:
                above = [float(g) for g, f in zip(grid, flags) if not f and g > top]
                lo, hi = bisect(top, min(above) if above else gamma_max)

    return ChangepointResult(
        gamma_changepoint=0.5 * (lo + hi),
        bracket=(lo, hi),
        rejects_at_gamma_one=True,
        exceeded_gamma_max=False,
        monotone=not inversions,
        inversions=tuple(inversions),
        n_evaluations=evals,
        **common,
    )


def _invert_one_side(
    rejects,
    center: float,
    step: float,
    tol: float,
    reject_direction: float,
    max_expansions: int,
    precheck_points: int,
) -> tuple[float, tuple[float, float], bool, bool]:
    """Locate the boundary between rejecting and non-rejecting tau.

    ``reject_direction`` is -1 when rejection happens for small tau (lower
    endpoint, greater alternative) and +1 when it happens for large tau.
    Returns (endpoint, bracket, infinite, non_monotone); the endpoint is the
    non-rejecting edge of the final bracket.
    """
    t_acc = center
    width = step
    for _ in range(max_expansions):
        if not rejects(t_acc):
            break
        t_acc -= reject_direction * width
        width *= 2.0
    else:
        raise RuntimeError("could not find a non-rejected hypothesis value")

    t_rej = t_acc + reject_direction * step
    width = step
    found = False
    for _ in range(max_expansions):
        if rejects(t_rej):
            found = True
            break
        width *= 2.0
        t_rej += reject_direction * width
    if not found:
        # no rejection anywhere on this side: endpoint is -inf for the lower
        # search (reject_direction -1) and +inf for the upper (+1)
        endpoint = reject_direction * math.inf
        return endpoint, (min(t_rej, t_acc), max(t_rej, t_acc)), True, False

    non_monotone = False
    if precheck_points >= 3:
        grid = np.linspace(t_rej, t_acc, precheck_points)
        flags = [rejects(float(t)) for t in grid]
        # walking from the rejecting end: once the indicator turns off it
        # should stay off
        turned_off = False
        for f in flags:
            if not f:
                turned_off = True
            elif turned_off:
                non_monotone = True
        if non_monotone:
            # widen: restart the bisection from the rejecting grid point
            # closest to the non-rejecting side (grid runs t_rej -> t_acc)
            rej_pts = [float(t) for t, f in zip(grid, flags) if f]
            if rej_pts:
                t_rej = rej_pts[-1]

    # bisection keeping reject at t_rej, no-reject at t_acc
    while abs(t_acc - t_rej) > tol:
        mid = 0.5 * (t_acc + t_rej)
        if not (min(t_rej, t_acc) < mid < max(t_rej, t_acc)):
            break
        if rejects(mid):
            t_rej = mid
        else:
            t_acc = mid
    return t_acc, (min(t_rej, t_acc), max(t_rej, t_acc)), False, non_monotone


def sensitivity_interval(
    sample: PairedSample,
    gamma: float,
    confidence: float = 0.90,
    method: str = "studentized",
    engine: Union[EnumSpec, None] = None,
    tol: Union[float, None] = None,
    max_expansions: int = 60,
    precheck_points: int = 17,
) -> SensitivityInterval:
    """Invert the two one-sided tests at level ``(1 - confidence) / 2`` each.

    The lower endpoint is the infimum of values not rejected against the
    greater alternative; the upper endpoint is the supremum not rejected
    against the less alternative.  A coarse precheck between the bracketing
    points flags non-monotone indicators (the bracket is then widened to the
    outermost rejecting point and the result marked).  Endpoints are +/-inf
    when the corresponding test rejects nowhere beyond the expansion cap.
    """
    if not (0.0 < confidence < 1.0):
        raise ValueError("confidence must be in (0, 1)")
    alpha = (1.0 - confidence) / 2.0
    engine = engine or EnumSpec()
    sens = SensitivityParam(gamma)
    y = sample.y
    span = float(y.max() - y.min())
    if tol is None:
        tol = 1e-6 * span + 1e-12
    step = span if span > 0 else max(abs(float(y[0])), 1.0)
    center = float(y.mean())

    def make_rejector(alternative: str):
        def rejects(t: float) -> bool:
            spec = TestSpec(tau=t, alpha=alpha, alternative=alternative, method=method)
            return run_test(sample, spec, sens, engine).reject

        return rejects

    lower, lower_bracket, lower_inf, nm_lo = _invert_one_side(
        make_rejector("greater"), center, step, tol, -1.0, max_expansions, precheck_points
    )
    upper, upper_bracket, upper_inf, nm_hi = _invert_one_side(
        make_rejector("less"), center, step, tol, +1.0, max_expansions, precheck_points
    )
    return SensitivityInterval(
        gamma=gamma,
        lower=-math.inf if lower_inf else lower,
        upper=math.inf if upper_inf else upper,
        confidence=confidence,
        method=method,
        tol=tol,
        lower_bracket=lower_bracket,
        upper_bracket=upper_bracket,
        non_monotone=nm_lo or nm_hi,
    )


def design_sensitivity(
    tau: float,
    mean: Union[float, None] = None,
    abs_moment: Union[float, None] = None,
    sample: Union[PairedSample, None] = None,
) -> DesignSensitivityResult:
    """Bias bound where large-sample power steps from 1 to 0.

    Supply either the population moments (``mean`` of the differences and
    ``abs_moment`` = E|Y - tau|) or a sample from which both are estimated
    by plug-in.  The formula is a population quantity; plug-in output is
    labeled an estimate.
    """
    if sample is not None:
        if mean is not None or abs_moment is not None:
            raise ValueError("pass either a sample or explicit moments, not both")
        mean = float(sample.y.mean())
        abs_moment = float(np.mean(np.abs(sample.y - tau)))
        source = "estimated"
    else:
        if mean is None or abs_moment is None:
            raise ValueError("need both mean and abs_moment when no sample is given")
        mean = float(mean)
        abs_moment = float(abs_moment)
        source = "analytic"
    if abs_moment <= 0.0:
        raise ValueError("design sensitivity undefined: E|Y - tau| must be positive")
    shift = abs(mean - tau)
    if abs_moment <= shift:
        return DesignSensitivityResult(
            gamma_tilde=math.inf,
            tau=tau,
            mean=mean,
            abs_moment=abs_moment,
            source=source,
            note="E|Y - tau| does not exceed |mean - tau|; the worst-case "
            "expectation never crosses zero, so power persists at every bound",
        )
    return DesignSensitivityResult(
        gamma_tilde=(abs_moment + shift) / (abs_moment - shift),
        tau=tau,
        mean=mean,
        abs_moment=abs_moment,
        source=source,
    )
