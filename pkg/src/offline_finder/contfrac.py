"""Continued-fraction engine used by the identity-free authentication protocol.

Expansions of irrational inputs are computed at a working precision and
re-derived at twice that precision; a window is only returned once both agree.
"""

from __future__ import annotations

import hashlib
import os
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Optional, Sequence, Union

import mpmath

from . import group
from .errors import InvalidArgument, InvalidNonce, PrecisionError
from .group import Point

DEFAULT_DPS = 256
MIN_DPS = 64
MAX_DOUBLINGS = 3
FC_LENGTH = 9
FC_ROOT = 3
FC_OFFSET_BASE = 2
FC_OFFSET_SPAN = 64
QUOTIENT_MAX = 2**63 - 1

Number = Union[mpmath.mpf, Fraction]


def default_precision() -> int:
    """Working precision in decimal digits; ``OFFLINE_FINDER_PRECISION`` overrides."""
    raw = os.environ.get("OFFLINE_FINDER_PRECISION")
    if not raw:
        return DEFAULT_DPS
    try:
        dps = int(raw)
    except ValueError as exc:
        raise InvalidArgument(f"OFFLINE_FINDER_PRECISION must be an integer, got {raw!r}") from exc
    if dps < MIN_DPS:
        raise InvalidArgument(f"precision must be at least {MIN_DPS} digits")
    return dps


@dataclass(frozen=True)
class PreciseReal:
    """A real number that can be re-evaluated at any precision.

    ``evaluate(dps)`` returns an ``mpmath.mpf`` (computed at ``dps`` digits) or
    an exact ``Fraction`` for rationals.
    """

    provenance: str
    evaluate: Callable[[int], Number] = field(compare=False, repr=False)
    dps: int = DEFAULT_DPS
    window_offset: Optional[int] = None

    def __post_init__(self):
        if self.dps < MIN_DPS:
            raise InvalidArgument(f"working precision must be >= {MIN_DPS} digits")

    @property
    def value(self) -> Number:
        return self.evaluate(self.dps)

    def with_precision(self, dps: int) -> "PreciseReal":
        return PreciseReal(self.provenance, self.evaluate, dps, self.window_offset)

    @classmethod
    def rational(cls, num: int, den: int = 1) -> "PreciseReal":
        frac = Fraction(num, den)
        return cls(f"{frac}", lambda dps: frac)

    @classmethod
    def from_expression(cls, expr: str, dps: Optional[int] = None) -> "PreciseReal":
        """Parse a sympy expression such as ``root(log(10), 3)`` or ``7/3``."""
        import sympy

        try:
            parsed = sympy.sympify(expr, rational=True)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise InvalidArgument(f"cannot parse expression {expr!r}") from exc
        if parsed.is_Rational:
            frac = Fraction(int(parsed.p), int(parsed.q))
            return cls(expr, lambda dps: frac, dps or default_precision())

        def evaluate(d: int) -> mpmath.mpf:
            val = parsed.evalf(d + 10)
            if not val.is_Float:
                raise InvalidArgument(f"expression {expr!r} is not a real number")
            with mpmath.workdps(d + 10):
                return mpmath.mpf(val._mpf_)

        return cls(expr, evaluate, dps or default_precision())


@dataclass(frozen=True)
class PartialQuotients:
    quotients: tuple[int, ...]
    offset: int = 0
    stable_precision: int = 0
    terminated: bool = False

    def __len__(self) -> int:
        return len(self.quotients)

    def __iter__(self):
        return iter(self.quotients)

    def __getitem__(self, item):
        return self.quotients[item]


def _expand_fraction(frac: Fraction, n: int) -> tuple[list[int], bool]:
    out = []
    num, den = frac.numerator, frac.denominator
    while len(out) < n:
        q, r = divmod(num, den)
        out.append(q)
        if r == 0:
            return out, True
        num, den = den, r
    return out, False


def _expand_float(x: PreciseReal, n: int, dps: int) -> tuple[list[int], bool]:
    with mpmath.workdps(dps):
        value = x.evaluate(dps)
        # tail below this is indistinguishable from zero at this precision
        eps = mpmath.mpf(10) ** (-(dps * 9 // 10))
        out = []
        while len(out) < n:
            a = int(mpmath.floor(value))
            out.append(a)
            frac = value - a
            if abs(frac) < eps:
                return out, True
            value = 1 / frac
    return out, False


def cf_expand(x: PreciseReal, count: int, offset: int = 0) -> PartialQuotients:
    """Quotients ``offset .. offset+count-1`` of the classical expansion of ``x``.

    Index 0 is the integer part. Rational inputs terminate early; floating
    inputs are checked against a recomputation at twice the precision and
    the precision is doubled on disagreement, at most three times.
    """
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    if offset < 0:
        raise InvalidArgument("offset must be >= 0")
    need = offset + count
    probe = x.evaluate(x.dps)
    if isinstance(probe, Fraction):
        full, done = _expand_fraction(probe, need)
        return PartialQuotients(tuple(full[offset:need]), offset, x.dps, done)

    dps = x.dps
    for _ in range(MAX_DOUBLINGS + 1):
        lo, lo_done = _expand_float(x, need, dps)
        hi, hi_done = _expand_float(x, need, 2 * dps)
        if lo == hi and lo_done == hi_done:
            return PartialQuotients(tuple(lo[offset:need]), offset, dps, lo_done)
        dps *= 2
    raise PrecisionError(
        f"expansion of {x.provenance} unstable up to {dps} digits for {need} quotients"
    )


def convergent(quotients: Sequence[int]) -> Fraction:
    """Value of the finite continued fraction ``[a0; a1, ..., an]``."""
    if not quotients:
        raise InvalidArgument("empty quotient list")
    value = Fraction(quotients[-1])
    for a in reversed(quotients[:-1]):
        value = a + 1 / value
    return value


def detect_period(quotients: Sequence[int], start: int = 1, min_repeats: int = 2) -> Optional[int]:
    """Smallest period of ``quotients[start:]`` seen at least ``min_repeats`` times."""
    tail = list(quotients[start:])
    for p in range(1, len(tail) // min_repeats + 1):
        if all(tail[j] == tail[j + p] for j in range(len(tail) - p)):
            return p
    return None


def transcendental_from_nonce(N: int, r: int = FC_ROOT, dps: Optional[int] = None) -> PreciseReal:
    """The ``r``-th root of ``log(N)`` as a re-evaluable real."""
    if not isinstance(N, int) or N <= 1:
        raise InvalidNonce(f"nonce must be an integer >= 2, got {N!r}")
    if r < 3:
        raise InvalidArgument("root degree must be >= 3")

    def evaluate(d: int) -> mpmath.mpf:
        with mpmath.workdps(d + 10):
            return mpmath.root(mpmath.log(N), r)

    return PreciseReal(f"root(log({N}), {r})", evaluate, dps or max(default_precision(), DEFAULT_DPS))


def _tail_value(head: Sequence[int], tail: PreciseReal, dps: int) -> mpmath.mpf:
    with mpmath.workdps(dps + 10):
        value = mpmath.mpf(tail.evaluate(dps))
        for a in reversed(head):
            value = a + 1 / value
        return value


def multi_continuation(
    window: Sequence[int] | PartialQuotients,
    count: int,
    rng: group.RandomSource,
    *,
    dps: Optional[int] = None,
) -> list[PreciseReal]:
    """Build ``count`` distinct reals ``[r_1..r_m, window, theta_j]``.

    Each has a random prefix of 2 to 5 positive integers and an irrational
    tail ``theta_j > 1`` (a cube root of a logarithm), so the window reappears
    verbatim starting at quotient ``m``.
    """
    window = tuple(window)
    if count < 2:
        raise InvalidArgument("count must be >= 2")
    if not window or any(a < 1 for a in window):
        raise InvalidArgument("window must be a non-empty list of positive quotients")
    dps = dps or default_precision()
    prefixes: set[tuple[int, ...]] = set()
    out = []
    while len(out) < count:
        m = rng.randrange(2, 6)
        prefix = tuple(rng.randrange(1, 10) for _ in range(m))
        if prefix in prefixes:
            continue
        prefixes.add(prefix)
        theta = transcendental_from_nonce(rng.randrange(3, 2**64), FC_ROOT, dps)
        head = prefix + window

        def evaluate(d: int, head=head, theta=theta) -> mpmath.mpf:
            return _tail_value(head, theta, d)

        desc = f"[{', '.join(map(str, head))}, {theta.provenance}]"
        out.append(PreciseReal(desc, evaluate, dps, window_offset=m))
    return out


# --------------------------------------------------------------------------
# FC challenges
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FcChallenge:
    quotients: PartialQuotients
    binding: bytes

    def __post_init__(self):
        if len(self.quotients) != FC_LENGTH:
            raise InvalidArgument(f"FC challenge must hold {FC_LENGTH} quotients")

    def to_bytes(self) -> bytes:
        for q in self.quotients:
            if q > QUOTIENT_MAX:
                warnings.warn(f"partial quotient {q} clamped to 2**63-1", RuntimeWarning)
        return self._clamped

    @staticmethod
    def decode_quotients(data: bytes) -> tuple[int, ...]:
        if len(data) != 8 * FC_LENGTH:
            raise InvalidArgument("FC encoding must be 72 bytes")
        return tuple(int.from_bytes(data[i : i + 8], "big") for i in range(0, len(data), 8))

    @cached_property
    def _clamped(self) -> bytes:
        return b"".join(min(q, QUOTIENT_MAX).to_bytes(8, "big") for q in self.quotients)

    def matches(self, encoded: bytes) -> bool:
        return bytes(encoded) == self._clamped


def fc_binding(key_a: Point, key_b: Point) -> bytes:
    return hashlib.sha256(group.encode_point(key_a) + group.encode_point(key_b)).digest()


def fc_offset(binding: bytes) -> int:
    return FC_OFFSET_BASE + int.from_bytes(binding[:2], "big") % FC_OFFSET_SPAN


@lru_cache(maxsize=4096)
def _derive_fc_cached(N: int, enc_a: bytes, enc_b: bytes, dps: int) -> FcChallenge:
    binding = hashlib.sha256(enc_a + enc_b).digest()
    x = transcendental_from_nonce(N, FC_ROOT, dps)
    window = cf_expand(x, FC_LENGTH, offset=fc_offset(binding))
    return FcChallenge(window, binding)


def derive_fc(N: int, key_a: Point, key_b: Point, dps: Optional[int] = None) -> FcChallenge:
    """Nine quotients of the cube root of ``log(N)``, windowed by a key-pair hash.

    The first two bytes of ``SHA256(key_a || key_b)`` pick the window offset
    (2..65), so swapping the keys changes the challenge.
    """
    if not isinstance(N, int) or N <= 1:
        raise InvalidNonce(f"nonce must be an integer >= 2, got {N!r}")
    return _derive_fc_cached(
        N, group.encode_point(key_a), group.encode_point(key_b), dps or default_precision()
    )


# --------------------------------------------------------------------------
# Golden-vector fixture files: ``expression ; precision ; quotients-csv``
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixtureVector:
    expression: str
    precision: int
    quotients: tuple[int, ...]


def parse_fixture_line(line: str) -> FixtureVector:
    parts = [p.strip() for p in line.split(";")]
    if len(parts) != 3:
        raise InvalidArgument(f"fixture line needs 3 ';'-separated fields: {line!r}")
    expr, prec, csv = parts
    try:
        quotients = tuple(int(q) for q in csv.split(","))
        precision = int(prec)
    except ValueError as exc:
        raise InvalidArgument(f"bad fixture line {line!r}") from exc
    return FixtureVector(expr, precision, quotients)


def format_fixture_line(vec: FixtureVector) -> str:
    return f"{vec.expression} ; {vec.precision} ; {','.join(map(str, vec.quotients))}"


def load_fixtures(lines: Iterable[str]) -> list[FixtureVector]:
    out = []
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(parse_fixture_line(line))
    return out
