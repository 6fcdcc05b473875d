"""Cost model and community survey tabulation.

Two unrelated-but-small concerns live here because they answer the same
question ("is a motorlance fleet worth deploying?") and share no state
with the dispatch side.

Money is handled in integer centavos throughout; public functions accept
pesos as int, str or Decimal and return Decimal pesos, so no float ever
touches a currency value.  Percentages are *truncated* (not rounded) to
one decimal place: 95/96 prints as 98.9, not 99.0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Iterable

from .errors import ParseError, ValidationError

# ---------------------------------------------------------------------------
# money


def to_centavos(php) -> int:
    """Convert a peso amount (int, str or Decimal) to integer centavos.

    Rejects anything with sub-centavo precision rather than silently
    rounding it.
    """
    if isinstance(php, bool):
        raise ValidationError("peso amount must be a number, not a bool")
    if isinstance(php, float):
        raise ValidationError("peso amounts must be int, str or Decimal, not float")
    try:
        d = Decimal(php)
    except InvalidOperation:
        raise ValidationError(f"not a peso amount: {php!r}") from None
    cents = d * 100
    if cents != cents.to_integral_value():
        raise ValidationError(f"sub-centavo amount not representable: {php}")
    return int(cents)


def pesos(centavos: int) -> Decimal:
    """Integer centavos back to a Decimal peso amount."""
    return Decimal(centavos) / 100


def _exact_fraction(value) -> Fraction:
    # Floats go through str() so 0.75 means the decimal 0.75, not its
    # binary expansion.
    if isinstance(value, float):
        value = str(value)
    if isinstance(value, str):
        return Fraction(Decimal(value))
    return Fraction(value)


@dataclass(frozen=True)
class CostModel:
    """Published acquisition cost ranges, in centavos.

    Defaults are the reference figures: ambulances 1.5M..2.5M PHP, a bare
    motorlance build 75k..150k PHP, outfitting adds 50%..75% on top, and
    the operating-cost reference point is a 74% reduction.
    """

    ambulance_cost_range: tuple[int, int] = (150_000_000, 250_000_000)
    motorlance_base_range: tuple[int, int] = (7_500_000, 15_000_000)
    outfitting_factor_range: tuple[Fraction, Fraction] = (
        Fraction(1, 2),
        Fraction(3, 4),
    )
    operating_cost_reduction_reference: Fraction = Fraction(74, 100)

    def __post_init__(self):
        for name in ("ambulance_cost_range", "motorlance_base_range", "outfitting_factor_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi <= 0:
                raise ValidationError(f"{name}: values must be > 0")
            if lo > hi:
                raise ValidationError(f"{name}: min {lo} exceeds max {hi}")
        if not 0 < self.operating_cost_reduction_reference < 1:
            raise ValidationError("operating_cost_reduction_reference must be in (0, 1)")


def outfitted_cost(base_php, factor) -> Decimal:
    """Total cost of one outfitted motorlance: base times (1 + factor).

    ``factor`` is the outfitting premium and must lie in [0.50, 0.75].
    Exact arithmetic; the result is Decimal pesos.
    """
    base = to_centavos(base_php)
    if base <= 0:
        raise ValidationError("base cost must be > 0")
    f = _exact_fraction(factor)
    lo, hi = Fraction(1, 2), Fraction(3, 4)
    if not lo <= f <= hi:
        raise ValidationError(f"outfitting factor {factor} outside [0.50, 0.75]")
    total = Fraction(base) * (1 + f)
    # Centavo amounts stay integral for every published input; an exotic
    # factor like 13/24 can land between centavos, in which case we keep
    # the exact value as a Decimal rather than invent precision.
    return Decimal(total.numerator) / Decimal(total.denominator) / 100


def cost_ratio(motorlance_total_php, ambulance_cost_php) -> Decimal:
    """Motorlance cost as a percentage of ambulance cost, one decimal."""
    m = to_centavos(motorlance_total_php)
    a = to_centavos(ambulance_cost_php)
    if m <= 0 or a <= 0:
        raise ValidationError("costs must be > 0")
    ratio = Fraction(100 * m, a)
    return (Decimal(ratio.numerator) / Decimal(ratio.denominator)).quantize(Decimal("0.1"))


def fleet_for_budget(budget_php, unit_total_php) -> int:
    """How many units a budget buys: floor(budget / unit cost)."""
    budget = to_centavos(budget_php)
    unit = to_centavos(unit_total_php)
    if budget <= 0 or unit <= 0:
        raise ValidationError("budget and unit cost must be > 0")
    return budget // unit


def cost_table(model: CostModel | None = None, budget_php=None) -> dict:
    """The acquisition comparison as a JSON-ready dict.

    The two ratio cells pair extremes: the dearest motorlance against the
    cheapest ambulance (worst case) and the cheapest motorlance against
    the dearest ambulance (best case).
    """
    model = model or CostModel()
    amb_lo, amb_hi = (pesos(c) for c in model.ambulance_cost_range)
    base_lo, base_hi = (pesos(c) for c in model.motorlance_base_range)
    f_lo, f_hi = model.outfitting_factor_range
    out_lo = outfitted_cost(base_lo, f_lo)
    out_hi = outfitted_cost(base_hi, f_hi)
    table = {
        "ambulance_cost_php": {"min": str(amb_lo), "max": str(amb_hi)},
        "motorlance_base_cost_php": {"min": str(base_lo), "max": str(base_hi)},
        "outfitting_factor": {"min": str(Decimal(f_lo.numerator) / f_lo.denominator),
                              "max": str(Decimal(f_hi.numerator) / f_hi.denominator)},
        "motorlance_outfitted_cost_php": {"min": str(out_lo), "max": str(out_hi)},
        "cost_vs_ambulance_percent": {
            "max": str(cost_ratio(out_hi, amb_lo)),
            "min": str(cost_ratio(out_lo, amb_hi)),
        },
        "operating_cost_reduction_reference": str(
            Decimal(model.operating_cost_reduction_reference.numerator)
            / model.operating_cost_reduction_reference.denominator
        ),
    }
    if budget_php is not None:
        table["fleet_for_budget"] = {
            "budget_php": str(pesos(to_centavos(budget_php))),
            "units_at_max_cost": fleet_for_budget(budget_php, out_hi),
            "units_at_min_cost": fleet_for_budget(budget_php, out_lo),
        }
    return table


# ---------------------------------------------------------------------------
# survey

SURVEY_HEADER = ("age", "sex", "degree", "internet", "phone", "brand",
                 "q7", "q8", "q9", "q10", "q11")

# q11 is optional free text; a blank there never counts as missing.
_REQUIRED = SURVEY_HEADER[:-1]

_TRUTHY = {"yes", "y", "true", "1"}
_FALSY = {"no", "n", "false", "0"}

# Apple devices run iOS; Huawei ships without Google services and may be
# running HarmonyOS, so it is reported as its own category rather than
# folded into Android.
_APPLE_BRANDS = {"apple", "iphone"}
_HUAWEI_BRANDS = {"huawei", "honor"}

# Fixed keyword map for the free-text q10 answers.  First match wins, in
# this order, so "book a Grab" is a TNC answer even though it could also
# read as a personal arrangement.
_Q10_KEYWORDS = (
    ("tnc_app", ("grab", "angkas", "joyride", "tnc", "ride-hail", "ridehail")),
    ("personal_vehicle", ("own car", "personal", "family car", "family van",
                          "private car", "motorcycle", "drive")),
    ("call_based", ("call", "hotline", "911", "phone", "landline", "text")),
)


def categorize_q10(text: str) -> str:
    """Map a free-text current-system answer onto a fixed category."""
    lowered = text.lower()
    for category, keywords in _Q10_KEYWORDS:
        if any(kw in lowered for kw in keywords):
            return category
    return "other"


@dataclass(frozen=True)
class SurveyResponse:
    """One retained survey row; ``None`` marks a blank cell."""

    age: int | None
    sex: str | None
    degree: bool | None
    internet: bool | None
    phone: bool | None
    brand: str | None
    q7: int | None
    q8: int | None
    q9: int | None
    q10: str | None
    q11: str | None = None

    def missing_count(self) -> int:
        return sum(1 for name in _REQUIRED if getattr(self, name) is None)


def _parse_bool(cell: str, column: str, line: int) -> bool:
    low = cell.lower()
    if low in _TRUTHY:
        return True
    if low in _FALSY:
        return False
    raise ValidationError(f"line {line}: {column} must be yes/no, got {cell!r}")


def _parse_likert(cell: str, column: str, line: int) -> int:
    try:
        value = int(cell)
    except ValueError:
        raise ParseError(f"line {line}: {column} is not an integer: {cell!r}") from None
    if not 1 <= value <= 5:
        raise ValidationError(f"line {line}: {column} must be 1..5, got {value}")
    return value


def _parse_row(cells: list[str], line: int) -> SurveyResponse:
    if len(cells) != len(SURVEY_HEADER):
        raise ParseError(
            f"line {line}: expected {len(SURVEY_HEADER)} fields, got {len(cells)}"
        )
    raw = {name: cell.strip() for name, cell in zip(SURVEY_HEADER, cells)}

    def blank(name):
        return raw[name] == ""

    age = None
    if not blank("age"):
        try:
            age = int(raw["age"])
        except ValueError:
            raise ParseError(f"line {line}: age is not an integer: {raw['age']!r}") from None
        if age <= 0:
            raise ValidationError(f"line {line}: age must be > 0, got {age}")

    sex = None
    if not blank("sex"):
        sex = raw["sex"].lower()
        if sex not in ("male", "female"):
            raise ValidationError(f"line {line}: sex must be male or female, got {raw['sex']!r}")

    return SurveyResponse(
        age=age,
        sex=sex,
        degree=None if blank("degree") else _parse_bool(raw["degree"], "degree", line),
        internet=None if blank("internet") else _parse_bool(raw["internet"], "internet", line),
        phone=None if blank("phone") else _parse_bool(raw["phone"], "phone", line),
        brand=None if blank("brand") else raw["brand"],
        q7=None if blank("q7") else _parse_likert(raw["q7"], "q7", line),
        q8=None if blank("q8") else _parse_likert(raw["q8"], "q8", line),
        q9=None if blank("q9") else _parse_likert(raw["q9"], "q9", line),
        q10=None if blank("q10") else raw["q10"],
        q11=None if blank("q11") else raw["q11"],
    )


def load_survey(source) -> tuple[list[SurveyResponse], int]:
    """Read a survey CSV; returns (retained rows, excluded count).

    ``source`` is a path or an open text file.  Rows missing two or more
    required fields are excluded (and counted) per the analysis protocol;
    q11 is optional and never counts as missing.  Retained rows are
    validated strictly.
    """
    if hasattr(source, "read"):
        return _load_survey_file(source, getattr(source, "name", "<stream>"))
    with open(source, newline="", encoding="utf-8") as fh:
        return _load_survey_file(fh, str(source))


def _load_survey_file(fh, name: str) -> tuple[list[SurveyResponse], int]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{name}: empty file, expected survey header") from None
    if tuple(h.strip() for h in header) != SURVEY_HEADER:
        raise ParseError(
            f"{name}: line 1: header must be {','.join(SURVEY_HEADER)}"
        )
    retained: list[SurveyResponse] = []
    excluded = 0
    for cells in reader:
        if not cells:
            continue
        line = reader.line_num
        if sum(1 for name_, cell in zip(_REQUIRED, cells) if cell.strip() == "") >= 2:
            # Excluded before validation: a mostly-blank row is dropped,
            # not rejected.
            if len(cells) != len(SURVEY_HEADER):
                raise ParseError(
                    f"line {line}: expected {len(SURVEY_HEADER)} fields, got {len(cells)}"
                )
            excluded += 1
            continue
        retained.append(_parse_row(cells, line))
    return retained, excluded


def load_survey_text(text: str) -> tuple[list[SurveyResponse], int]:
    """``load_survey`` over an in-memory CSV string."""
    return _load_survey_file(io.StringIO(text), "<string>")


# ---------------------------------------------------------------------------
# tabulation


def truncated_percent(count: int, total: int) -> float:
    """count/total as a percentage, truncated to one decimal place."""
    if total <= 0:
        raise ValidationError("percentage denominator must be > 0")
    return (1000 * count // total) / 10


AGE_BUCKETS = (("18-24", 18, 24), ("25-34", 25, 34), ("35-44", 35, 44),
               ("45-54", 45, 54), ("55+", 55, 200))


@dataclass(frozen=True)
class SurveyStats:
    """Marginal shares over retained responses.

    Every percentage uses the non-missing answers to that question as its
    denominator, and is truncated to one decimal.
    """

    n: int
    sex_percent: dict = field(default_factory=dict)
    age_bucket_percent: dict = field(default_factory=dict)
    under_55_percent: float = 0.0
    degree_percent: dict = field(default_factory=dict)
    internet_percent: float = 0.0
    phone_percent: float = 0.0
    os_percent: dict = field(default_factory=dict)
    likert_counts: dict = field(default_factory=dict)
    regular_app_use_percent: float = 0.0
    q10_percent: dict = field(default_factory=dict)
    answered: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "n": self.n,
            "sex_percent": dict(self.sex_percent),
            "age_bucket_percent": dict(self.age_bucket_percent),
            "under_55_percent": self.under_55_percent,
            "degree_percent": dict(self.degree_percent),
            "internet_percent": self.internet_percent,
            "phone_percent": self.phone_percent,
            "os_percent": dict(self.os_percent),
            "likert_counts": {q: dict(h) for q, h in self.likert_counts.items()},
            "regular_app_use_percent": self.regular_app_use_percent,
            "q10_percent": dict(self.q10_percent),
            "answered": dict(self.answered),
        }


def _share_map(counts: dict, total: int) -> dict:
    return {key: truncated_percent(c, total) for key, c in counts.items()}


def tabulate(responses: Iterable[SurveyResponse]) -> SurveyStats:
    """Compute the published marginals from retained responses."""
    rows = list(responses)
    if not rows:
        raise ValidationError("cannot tabulate an empty survey")
    n = len(rows)

    sexes = [r.sex for r in rows if r.sex is not None]
    sex_counts = {"female": sexes.count("female"), "male": sexes.count("male")}

    ages = [r.age for r in rows if r.age is not None]
    bucket_counts = {label: 0 for label, _, _ in AGE_BUCKETS}
    for age in ages:
        for label, lo, hi in AGE_BUCKETS:
            if lo <= age <= hi:
                bucket_counts[label] += 1
                break

    degrees = [r.degree for r in rows if r.degree is not None]
    internet = [r.internet for r in rows if r.internet is not None]
    phone = [r.phone for r in rows if r.phone is not None]

    brands = [r.brand.lower() for r in rows if r.brand is not None]
    os_counts = {"ios": 0, "android": 0, "huawei_possibly_harmonyos": 0}
    for brand in brands:
        if brand in _APPLE_BRANDS:
            os_counts["ios"] += 1
        elif brand in _HUAWEI_BRANDS:
            os_counts["huawei_possibly_harmonyos"] += 1
        else:
            os_counts["android"] += 1

    likert_counts = {}
    answered = {}
    for q in ("q7", "q8", "q9"):
        values = [getattr(r, q) for r in rows if getattr(r, q) is not None]
        likert_counts[q] = {score: values.count(score) for score in range(1, 6)}
        answered[q] = len(values)

    q7_values = [r.q7 for r in rows if r.q7 is not None]
    regular = sum(1 for v in q7_values if v >= 4)

    q10_cats = [categorize_q10(r.q10) for r in rows if r.q10 is not None]
    q10_counts = {"call_based": 0, "personal_vehicle": 0, "tnc_app": 0, "other": 0}
    for cat in q10_cats:
        q10_counts[cat] += 1

    answered.update(
        sex=len(sexes), age=len(ages), degree=len(degrees), internet=len(internet),
        phone=len(phone), brand=len(brands), q10=len(q10_cats),
    )

    return SurveyStats(
        n=n,
        sex_percent=_share_map(sex_counts, len(sexes)),
        age_bucket_percent=_share_map(bucket_counts, len(ages)),
        under_55_percent=truncated_percent(sum(1 for a in ages if a < 55), len(ages)),
        degree_percent=_share_map(
            {"yes": degrees.count(True), "no": degrees.count(False)}, len(degrees)
        ),
        internet_percent=truncated_percent(internet.count(True), len(internet)),
        phone_percent=truncated_percent(phone.count(True), len(phone)),
        os_percent=_share_map(os_counts, len(brands)),
        likert_counts=likert_counts,
        regular_app_use_percent=truncated_percent(regular, len(q7_values)),
        q10_percent=_share_map(q10_counts, len(q10_cats)),
        answered=answered,
    )
