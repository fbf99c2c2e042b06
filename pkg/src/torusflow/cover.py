"""Analysis of lifted geodesics on the universal cover.

The deck group of the square torus acts by integer translations.  This
module tracks how a lifted geodesic meets its own deck translates
(self-intersections, per-class intersection censuses), where it escapes to
(asymptotic direction, rotation number as a point of the projective line,
bounding strip), and detects the two configurations that certify dynamical
complexity: a double loop on one lift, and a pair of geodesic segments
anchored on a closed geodesic's axis whose interiors cross disjoint
translates of that axis on either side.

All finite-horizon counts and estimates are evidence about the sampled
window, never proofs about infinite rays; report consumers are expected to
treat them that way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import segments as sg
from .errors import (AxesNotDisjoint, NotEscaping, PrimitiveRequired,
                     ValidationError)
from .flow import Trajectory, integrate_batch

IntersectionEvent = sg.IntersectionEvent


# ---------------------------------------------------------------------------
# deck group

@dataclass(frozen=True)
class DeckTransform:
    """Integer translation (x, y) -> (x + m, y + n) of the cover."""

    m: int
    n: int

    def apply_point(self, p):
        return (p[0] + self.m, p[1] + self.n)

    def apply_array(self, xy):
        return np.asarray(xy, dtype=float) + np.array([self.m, self.n], dtype=float)

    def compose(self, other):
        return DeckTransform(self.m + other.m, self.n + other.n)

    def inverse(self):
        return DeckTransform(-self.m, -self.n)

    def power(self, k):
        return DeckTransform(k * self.m, k * self.n)

    @property
    def is_identity(self):
        return self.m == 0 and self.n == 0

    @property
    def is_primitive(self):
        """True when (m, n) is not a nontrivial multiple of a shorter vector."""
        return not self.is_identity and math.gcd(abs(self.m), abs(self.n)) == 1

    def class_rep(self):
        """Primitive, sign-normalised representative of this transform's class.

        Two nonzero transforms are equivalent when they have equal nonzero
        powers; each class is tagged by the primitive vector along the same
        line, with the first nonzero coordinate positive.
        """
        if self.is_identity:
            raise PrimitiveRequired("the identity translation has no class")
        d = math.gcd(abs(self.m), abs(self.n))
        m, n = self.m // d, self.n // d
        if m < 0 or (m == 0 and n < 0):
            m, n = -m, -n
        return DeckTransform(m, n)

    def class_key(self):
        rep = self.class_rep()
        return f"{rep.m}/{rep.n}"

    def direction(self):
        """Unit vector of the translation."""
        norm = math.hypot(self.m, self.n)
        if norm == 0:
            raise PrimitiveRequired("identity translation has no direction")
        return (self.m / norm, self.n / norm)


def primitive_classes(radius):
    """Sign-normalised primitive vectors with sup-norm at most `radius`."""
    out = []
    for m in range(0, radius + 1):
        for n in range(-radius, radius + 1):
            t = DeckTransform(m, n)
            if t.is_identity or not t.is_primitive:
                continue
            if t.class_rep() == t:
                out.append(t)
    return sorted(out, key=lambda t: (t.m, t.n))


def apply_deck(tau, traj):
    """Deck-translated copy of a trajectory (same parameterisation)."""
    return Trajectory(spec_name=traj.spec_name, t=traj.t.copy(),
                      xy=tau.apply_array(traj.xy), v=traj.v.copy(),
                      s=traj.s.copy(), rtol=traj.rtol, atol=traj.atol,
                      method=traj.method)


# ---------------------------------------------------------------------------
# intersections of lifts

def self_intersections(traj, theta_min=sg.THETA_MIN, t_sep=sg.SELF_T_SEP,
                       refine=True):
    """Transversal self-crossings of one lifted geodesic.

    Returns (events, tangential); events are sorted by parameter and each
    has t1 < t2.  Pairs closer than t_sep in parameter are not crossings of
    distinct strands and are excluded.
    """
    return sg.crossings(traj.xy, traj.t, traj.xy, traj.t, traj.v, traj.v,
                        theta_min=theta_min, same_curve=True, t_sep=t_sep,
                        refine=refine)


def translate_intersections(traj, tau, theta_min=sg.THETA_MIN, refine=True):
    """Transversal crossings between a lift and its deck translate tau(lift)."""
    if tau.is_identity:
        raise ValidationError("translate_intersections needs a nonzero translation")
    shifted = tau.apply_array(traj.xy)
    return sg.crossings(traj.xy, traj.t, shifted, traj.t, traj.v, traj.v,
                        theta_min=theta_min, refine=refine)


def torus_self_crossings(traj, class_radius=2, theta_min=sg.THETA_MIN,
                         refine=True):
    """Parameter pairs where the projected geodesic meets itself on the torus.

    Each unordered pair {t1, t2} with equal torus points lifts to a unique
    integer difference vector, so scanning only sign-normalised translates
    (plus the identity case from the planar lift) records every torus
    crossing exactly once.  Returns a list of (event, loop_class) sorted by
    (t1, t2): event times are ordered t1 < t2 and loop_class is the deck
    class of the loop run from t1 to t2, with (0, 0) for contractible ones.
    """
    out = []
    ident = DeckTransform(0, 0)
    events, _ = self_intersections(traj, theta_min=theta_min, refine=refine)
    out.extend((ev, ident) for ev in events)
    r = int(class_radius)
    for m in range(0, r + 1):
        for n in range(-r, r + 1):
            if m == 0 and n <= 0:
                continue
            tau = DeckTransform(m, n)
            events, _ = translate_intersections(traj, tau, theta_min=theta_min,
                                                refine=refine)
            # an event (ta, tb) asserts lift(ta) = tau(lift(tb)); the loop
            # class compares the later lift point against the earlier one
            for ev in events:
                if ev.t1 > ev.t2:
                    ev = sg.IntersectionEvent(ev.t2, ev.t1, ev.x, ev.y,
                                              -ev.sign, ev.margin)
                    loop = tau
                else:
                    loop = tau.inverse()
                out.append((ev, loop))
    out.sort(key=lambda pair: (pair[0].t1, pair[0].t2))
    return out


@dataclass
class ClassCensus:
    """Per-class intersection counts against a ladder of horizons."""

    class_key: str
    counts: dict            # power k -> list of counts, one per horizon
    growing: bool


@dataclass
class IntersectionCensus:
    """Counts of a lift against translate families, per class and horizon.

    A class is flagged `growing` when, for at least one power of its
    representative, the counts strictly increase across the final three
    horizon rungs.  Growth over a finite ladder is evidence that the lift
    keeps meeting that translate family, not a proof of infinitely many
    crossings.
    """

    horizons: tuple
    class_radius: int
    classes: dict           # class_key -> ClassCensus

    def growing_classes(self):
        return [k for k, c in self.classes.items() if c.growing]

    def to_json(self):
        return json.dumps({
            "horizons": list(self.horizons),
            "class_radius": self.class_radius,
            "classes": {
                key: {"growing": c.growing,
                      "counts": {str(k): v for k, v in c.counts.items()}}
                for key, c in self.classes.items()},
        }, indent=2, sort_keys=True)


def _growing(counts_by_power):
    for counts in counts_by_power.values():
        tail = counts[-3:] if len(counts) >= 3 else counts
        if len(tail) >= 2 and all(b > a for a, b in zip(tail, tail[1:])):
            return True
    return False


def intersection_census(traj, class_radius=3, horizons=(100.0, 200.0, 400.0),
                        theta_min=sg.THETA_MIN):
    """Census of crossings between a lift and translate families.

    For every primitive class within `class_radius` (sup-norm) and every
    nonzero power k with |k| <= class_radius, counts the transversal
    crossings of the lift with its translate at each horizon rung.  Events
    are computed once at the deepest horizon and re-thresholded, so a rung
    counts exactly the crossings both of whose parameters lie within it.
    """
    horizons = tuple(sorted(horizons))
    if horizons[-1] > traj.horizon + 1e-9:
        raise ValidationError(
            f"census horizon {horizons[-1]} exceeds trajectory horizon {traj.horizon}")
    classes = {}
    for rep in primitive_classes(class_radius):
        counts = {}
        for k in range(-class_radius, class_radius + 1):
            if k == 0:
                continue
            eta = rep.power(k)
            events, _ = translate_intersections(traj, eta, theta_min=theta_min,
                                                refine=False)
            counts[k] = [sum(1 for e in events if e.t1 <= h and e.t2 <= h)
                         for h in horizons]
        classes[rep.class_key()] = ClassCensus(class_key=rep.class_key(),
                                               counts=counts,
                                               growing=_growing(counts))
    return IntersectionCensus(horizons=horizons, class_radius=class_radius,
                              classes=classes)


# ---------------------------------------------------------------------------
# asymptotic direction, rotation number, strip

@dataclass(frozen=True)
class RotationNumber:
    """Slope of an asymptotic direction as a point of the projective line.

    The vertical direction is a first-class value (`infinite`), kept as a
    tag so that serialisation and comparisons never rely on float
    sentinels.
    """

    infinite: bool
    slope: float = float("nan")

    @classmethod
    def finite(cls, value):
        return cls(infinite=False, slope=float(value))

    @classmethod
    def infinity(cls):
        return cls(infinite=True)

    @classmethod
    def of_direction(cls, dx, dy):
        """Slope map: (x, y) -> y/x when x is nonzero, else the vertical point."""
        if dx != 0.0:
            return cls.finite(dy / dx)
        return cls.infinity()

    def direction(self):
        """Unit representative with the sign convention of class_rep."""
        if self.infinite:
            return (0.0, 1.0)
        n = math.hypot(1.0, self.slope)
        return (1.0 / n, self.slope / n)

    def projective_angle(self):
        """Angle in [0, pi) of the corresponding line through the origin."""
        if self.infinite:
            return math.pi / 2.0
        return math.atan(self.slope) % math.pi

    def to_json_obj(self):
        return "inf" if self.infinite else self.slope

    @classmethod
    def from_json_obj(cls, obj):
        if obj == "inf":
            return cls.infinity()
        return cls.finite(float(obj))

    def __str__(self):
        return "inf" if self.infinite else f"{self.slope:.12g}"


@dataclass(frozen=True)
class DirectionEstimate:
    """Finite-horizon estimate of the escape direction of a ray.

    `direction` is the unit displacement direction at the horizon,
    `rotation` its slope, and `tail_oscillation` the largest angle (radians)
    between the direction samples over the final fifth of the ray and the
    final direction; it decays as the estimate converges.
    """

    direction: tuple
    rotation: RotationNumber
    tail_oscillation: float
    horizon: float
    final_norm: float


def asymptotic_direction(traj, min_norm=10.0):
    """Estimate the escape direction of a lifted ray from its samples.

    Raises NotEscaping when the ray has not moved at least `min_norm` away
    from its launch point at the horizon.
    """
    disp = traj.xy - traj.xy[0]
    final = disp[-1]
    norm = float(np.hypot(final[0], final[1]))
    if norm < min_norm:
        raise NotEscaping(
            f"displacement {norm:.3g} at horizon {traj.horizon:g} is below {min_norm:g}")
    d = (final[0] / norm, final[1] / norm)
    # a component at roundoff scale is a zero component; without the snap a
    # vertical ray would report slope ~1e16 instead of the vertical point
    if abs(d[0]) < 1e-12:
        d = (0.0, math.copysign(1.0, d[1]))
    elif abs(d[1]) < 1e-12:
        d = (math.copysign(1.0, d[0]), 0.0)
    tail = disp[int(0.8 * (len(disp) - 1)):]
    norms = np.hypot(tail[:, 0], tail[:, 1])
    good = norms > 1e-12
    cosang = np.clip((tail[good, 0] * d[0] + tail[good, 1] * d[1]) / norms[good],
                     -1.0, 1.0)
    osc = float(np.arccos(cosang).max()) if good.any() else math.inf
    return DirectionEstimate(direction=d,
                             rotation=RotationNumber.of_direction(*d),
                             tail_oscillation=osc,
                             horizon=traj.horizon,
                             final_norm=norm)


def direction_antisymmetry(fwd_traj, bwd_traj, min_norm=10.0):
    """Angle between the forward direction and minus the backward direction."""
    dplus = asymptotic_direction(fwd_traj, min_norm=min_norm)
    dminus = asymptotic_direction(bwd_traj, min_norm=min_norm)
    dot = -(dplus.direction[0] * dminus.direction[0]
            + dplus.direction[1] * dminus.direction[1])
    gap = float(np.arccos(np.clip(dot, -1.0, 1.0)))
    return {"angle_gap": gap, "forward": dplus, "backward": dminus}


@dataclass(frozen=True)
class Strip:
    """Smallest slab of the given direction containing the sampled ray."""

    direction: tuple     # unit vector along the slab
    offset_lo: float
    offset_hi: float

    @property
    def width(self):
        return self.offset_hi - self.offset_lo


def fit_strip(traj, direction=None):
    """Bounding slab of a sampled lift in a direction (default: its escape one)."""
    if direction is None:
        direction = asymptotic_direction(traj).direction
    dx, dy = direction
    n = math.hypot(dx, dy)
    dx, dy = dx / n, dy / n
    w = -dy * traj.xy[:, 0] + dx * traj.xy[:, 1]
    return Strip(direction=(dx, dy), offset_lo=float(w.min()),
                 offset_hi=float(w.max()))


# ---------------------------------------------------------------------------
# configuration detectors

@dataclass(frozen=True)
class DoubleLoopWitness:
    """Two self-crossings with disjoint, ordered parameter intervals."""

    t1: float
    t2: float
    t3: float
    t4: float
    first: IntersectionEvent
    second: IntersectionEvent


def detect_double_loop(events):
    """First pair of self-crossings whose loops are traversed one after the other.

    `events` are self-intersection events (each with t1 < t2).  Returns a
    DoubleLoopWitness with t1 < t2 <= t3 < t4, or None.
    """
    best = None     # among scanned events, the one closing earliest
    for ev in sorted(events, key=lambda e: (e.t1, e.t2)):
        if best is not None and best.t2 <= ev.t1:
            return DoubleLoopWitness(best.t1, best.t2, ev.t1, ev.t2, best, ev)
        if best is None or ev.t2 < best.t2:
            best = ev
    return None


def _point_polyline_distance(points, poly):
    """Distance from each point to a polyline, vectorised over segments."""
    a = poly[:-1]
    d = poly[1:] - a
    len2 = (d * d).sum(axis=1)
    len2[len2 == 0.0] = 1.0
    out = np.empty(len(points))
    for i, p in enumerate(np.asarray(points, dtype=float)):
        t = np.clip(((p - a) * d).sum(axis=1) / len2, 0.0, 1.0)
        proj = a + t[:, None] * d
        out[i] = np.hypot(*(proj - p).T).min()
    return out


def _tile_axis(axis_nodes, deck, span_lo, span_hi):
    """Concatenate deck-periodic copies of one axis period to cover a span.

    `axis_nodes` is one period of the closed geodesic's lift (first node not
    repeated); `deck` its translation (p, q).  Copies k = span_lo..span_hi
    are chained into a single polyline.
    """
    p = np.array(deck, dtype=float)
    pieces = [axis_nodes + k * p for k in range(span_lo, span_hi + 1)]
    pieces.append(axis_nodes[:1] + (span_hi + 1) * p)
    return np.vstack(pieces)


@dataclass(frozen=True)
class AnchoredCrossingResult:
    """Verdict of the anchored-segments detector, with crossing witnesses."""

    found: bool
    reason: str
    witness_plus: tuple | None = None    # point where eta(axis) crosses c1
    witness_minus: tuple | None = None   # point where eta^-1(axis) crosses c2
    diagnostics: dict = field(default_factory=dict)


def detect_anchored_crossing_pair(c1, c2, axis_nodes, axis_deck, eta,
                                  endpoint_tol=1e-6, interior_margin=0.02):
    """Detect two arcs anchored on an axis that cross its translates on both sides.

    Parameters
    ----------
    c1, c2 : Trajectory segments whose endpoints are expected on the axis
    axis_nodes : (N, 2) one period of the axis lift
    axis_deck : (p, q) translation closing the axis
    eta : DeckTransform; its translate of the axis must be disjoint from the
        axis itself, otherwise AxesNotDisjoint is raised
    endpoint_tol : max distance of the four arc endpoints from the axis
    interior_margin : fraction of each arc's parameter span near the ends
        ignored when checking that interiors avoid the axis

    Returns an AnchoredCrossingResult; `found` is True only when all the
    geometric requirements hold and both required crossings exist.
    """
    axis_nodes = np.asarray(axis_nodes, dtype=float)
    axis_class = DeckTransform(int(round(axis_deck[0])),
                               int(round(axis_deck[1]))).class_rep()
    if eta.class_rep() == axis_class:
        # such a translate maps the axis onto itself as a set, with no
        # transversal crossings to count
        raise AxesNotDisjoint(
            f"translate {eta} is parallel to the axis class {axis_class}")
    arcs = np.vstack([c1.xy, c2.xy])
    dirvec = np.array(axis_deck, dtype=float)
    dlen2 = float(dirvec @ dirvec)
    # project everything on the axis direction to size the tiling
    offs = ((arcs - axis_nodes[0]) @ dirvec) / dlen2
    span_lo = int(math.floor(offs.min())) - 2 - max(abs(eta.m), abs(eta.n))
    span_hi = int(math.ceil(offs.max())) + 2 + max(abs(eta.m), abs(eta.n))
    tiled = _tile_axis(axis_nodes, axis_deck, span_lo, span_hi)

    ev, tang = sg.crossings(tiled, np.arange(len(tiled), dtype=float),
                            eta.apply_array(tiled),
                            np.arange(len(tiled), dtype=float), refine=False)
    if ev or tang:
        raise AxesNotDisjoint(
            f"translate {eta} of the axis meets the axis ({len(ev)} crossings)")

    end_pts = [c1.xy[0], c1.xy[-1], c2.xy[0], c2.xy[-1]]
    end_d = _point_polyline_distance(end_pts, tiled)
    if end_d.max() > endpoint_tol:
        return AnchoredCrossingResult(
            found=False, reason="arc endpoints are not on the axis",
            diagnostics={"endpoint_distances": end_d.tolist()})

    def interior(c):
        n = len(c.t)
        k = max(1, int(interior_margin * n))
        return c.xy[k:n - k], c.t[k:n - k]

    for label, c in (("c1", c1), ("c2", c2)):
        ixy, it = interior(c)
        iev, _ = sg.crossings(ixy, it, tiled,
                              np.arange(len(tiled), dtype=float), refine=False)
        if iev:
            return AnchoredCrossingResult(
                found=False, reason=f"interior of {label} meets the axis",
                diagnostics={"interior_events": len(iev)})

    ev_plus, _ = sg.crossings(c1.xy, c1.t, eta.apply_array(tiled),
                              np.arange(len(tiled), dtype=float), refine=False)
    ev_minus, _ = sg.crossings(c2.xy, c2.t, eta.inverse().apply_array(tiled),
                               np.arange(len(tiled), dtype=float), refine=False)
    if not ev_plus or not ev_minus:
        return AnchoredCrossingResult(
            found=False,
            reason="required crossings with the shifted axis are missing",
            diagnostics={"plus": len(ev_plus), "minus": len(ev_minus)})
    return AnchoredCrossingResult(
        found=True, reason="all requirements hold",
        witness_plus=ev_plus[0].point, witness_minus=ev_minus[0].point,
        diagnostics={"plus": len(ev_plus), "minus": len(ev_minus)})


# ---------------------------------------------------------------------------
# rotation-number field over launch angles

def direction_field(spec, base, angles, horizon=300.0, dt=0.1, h=0.01):
    """Direction estimates for a fan of launch angles at one base point.

    Batch-integrates all rays at once; estimates come from the uniform
    samples, so the cost per angle is small.  Returns a list of
    DirectionEstimate in the order of `angles`.
    """
    from .flow import unit_tangent
    states = []
    for a in angles:
        v = unit_tangent(spec, base, float(a))
        states.append([v.x, v.y, v.vx, v.vy])
    times, samples = integrate_batch(spec, np.array(states), horizon, h=h,
                                     sample_dt=dt)
    out = []
    for i in range(len(angles)):
        xy = samples[i, :, 0:2]
        traj = Trajectory(spec_name=spec.name, t=times, xy=xy,
                          v=samples[i, :, 2:4], s=times, rtol=float("nan"),
                          atol=float("nan"), method="rk4-batch")
        out.append(asymptotic_direction(traj))
    return out


def max_projective_jump(estimates):
    """Largest angular jump of the direction line between adjacent estimates."""
    ang = np.array([e.rotation.projective_angle() for e in estimates])
    d = np.abs(np.diff(ang))
    d = np.minimum(d, math.pi - d)
    return float(d.max())


def hit_rotation_targets(spec, base, targets, horizon=300.0, dt=1.0, h=0.01,
                         grid=256, tol=1e-3, max_iter=40):
    """Find launch angles whose rotation number hits each target slope.

    Scans a fan of `grid` angles for a bracket around each finite target,
    then bisects all targets in lockstep so every round costs one batched
    integration.  Returns a list of dicts (target, angle, slope, achieved,
    iterations), in the order of `targets`.
    """
    angles = np.linspace(0.0, 2.0 * math.pi, grid, endpoint=False)
    estimates = direction_field(spec, base, angles, horizon=horizon, dt=dt, h=h)

    def slope_or_none(est):
        return None if est.rotation.infinite else est.rotation.slope

    slopes = [slope_or_none(e) for e in estimates]
    state = []
    for target in targets:
        bracket = None
        for i in range(len(angles)):
            j = (i + 1) % len(angles)
            si, sj = slopes[i], slopes[j]
            if si is None or sj is None:
                continue
            lo, hi = min(si, sj), max(si, sj)
            # a wide slope gap means the pair straddles a vertical direction
            if lo <= target <= hi and hi - lo < 1.0:
                step = (angles[j] - angles[i]) % (2.0 * math.pi)
                bracket = [angles[i], angles[i] + step, si, sj]
                break
        state.append({"target": target, "bracket": bracket, "achieved": False,
                      "angle": None, "slope": None, "iterations": 0})

    for _ in range(max_iter):
        pending = [s for s in state if s["bracket"] is not None and not s["achieved"]]
        if not pending:
            break
        mids = [0.5 * (s["bracket"][0] + s["bracket"][1]) for s in pending]
        ests = direction_field(spec, base, mids, horizon=horizon, dt=dt, h=h)
        for s, angle, est in zip(pending, mids, ests):
            s["iterations"] += 1
            s_mid = slope_or_none(est)
            s["angle"] = angle
            if s_mid is None:
                s["bracket"] = None
                continue
            s["slope"] = s_mid
            if abs(s_mid - s["target"]) <= tol:
                s["achieved"] = True
                continue
            a_lo, a_hi, s_lo, s_hi = s["bracket"]
            if (s_lo <= s["target"]) == (s_mid <= s["target"]):
                s["bracket"] = [angle, a_hi, s_mid, s_hi]
            else:
                s["bracket"] = [a_lo, angle, s_lo, s_mid]

    results = []
    for s in state:
        r = {"target": s["target"], "achieved": s["achieved"],
             "angle": s["angle"], "slope": s["slope"],
             "iterations": s["iterations"]}
        if not s["achieved"] and s["angle"] is None:
            r["reason"] = "no bracket on the scan grid"
        results.append(r)
    return results
