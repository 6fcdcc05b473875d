"""Generate the bundled synthetic survey dataset.

The raw survey responses are not public, so the package ships a 100-row
reconstruction that reproduces every published marginal exactly under the
package's own truncation rules:

  96 rows retained after dropping 4 rows with >= 2 missing required fields
  female 60.0% (57/95, one retained row left sex blank)
  under 55 98.9% (95/96)
  phone 100.0% (96/96), internet 98.9% (95/96)
  iOS 25.0% (24/96), 3 Huawei handsets reported separately
  q7 >= 4 share 47.9% (46/96)
  TNC-for-emergency 10.6% (10/94, two retained rows left q10 blank)
  among the 10 oldest: 4 use a non-call-based system today
  among the 10 youngest: 7 use a call-based system today

Run from the repository root:  python3 scripts/generate_survey_fixture.py
Writes data/survey_mandaluyong.csv and the identical packaged copy under
src/motorlance/data/, then re-loads the file and asserts every figure.
"""

from __future__ import annotations

import csv
import pathlib
import random
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from motorlance.feasibility import categorize_q10, load_survey, tabulate  # noqa: E402

SEED = 20240214

Q10_TEXT = {
    "call_based": [
        "call 911",
        "call the barangay hotline",
        "phone a relative who calls for help",
        "text the emergency hotline",
        "call city emergency services",
    ],
    "personal_vehicle": [
        "drive our own car",
        "personal motorcycle",
        "family car to the hospital",
        "use my personal vehicle",
    ],
    "tnc_app": [
        "book a Grab car",
        "use the Grab app",
        "Angkas ride",
        "ride-hailing app",
    ],
    "other": [
        "take a jeepney",
        "tricycle to the clinic",
        "ask a neighbor for help",
        "walk to the health center",
    ],
}

Q11_TEXT = [
    "GPS tracking of the driver",
    "driver photo and plate number",
    "fare-free for emergencies",
    "option to call instead of the app",
    "family notification",
    "first aid instructions while waiting",
]


def build_rows(rng: random.Random) -> list[dict]:
    n = 96
    rows = [dict() for _ in range(n)]

    # Ages: ten youngest (<= 22) at the front, ten oldest (>= 48) at the
    # back, everyone else strictly between, so "the 10 oldest/youngest"
    # is unambiguous. Exactly one respondent is 55 or older.
    young = [18, 18, 19, 19, 20, 20, 21, 21, 22, 22]
    old = [48, 49, 50, 51, 52, 52, 53, 53, 54, 61]
    middle = [23 + i % 25 for i in range(76)]
    for i, age in enumerate(young + middle + old):
        rows[i]["age"] = str(age)
    young_idx = list(range(10))
    middle_idx = list(range(10, 86))
    old_idx = list(range(86, 96))

    # Sex: 57 female, 38 male, one middle row blank -> 57/95 = 60.0%.
    sexes = ["female"] * 57 + ["male"] * 38
    rng.shuffle(sexes)
    blank_sex_at = 40
    it = iter(sexes)
    for i in range(n):
        rows[i]["sex"] = "" if i == blank_sex_at else next(it)

    def spread(column, values):
        vals = list(values)
        rng.shuffle(vals)
        for i in range(n):
            rows[i][column] = str(vals[i])

    spread("degree", ["yes"] * 52 + ["no"] * 44)
    spread("phone", ["yes"] * 96)
    internet = ["yes"] * 95 + ["no"]
    rng.shuffle(internet)
    internet[55], internet[internet.index("no")] = "no", internet[55]
    for i in range(n):
        rows[i]["internet"] = internet[i]

    brands = (["Apple"] * 24 + ["Huawei"] * 3 + ["Samsung"] * 30
              + ["Xiaomi"] * 16 + ["Oppo"] * 12 + ["Vivo"] * 7 + ["Realme"] * 4)
    spread("brand", brands)

    spread("q7", [1] * 10 + [2] * 16 + [3] * 24 + [4] * 28 + [5] * 18)
    spread("q8", [1] * 4 + [2] * 8 + [3] * 20 + [4] * 34 + [5] * 30)
    spread("q9", [1] * 3 + [2] * 9 + [3] * 22 + [4] * 35 + [5] * 27)

    # q10: 94 answers (two middle rows blank). 10 TNC / 94 -> 10.6%.
    # Oldest ten: 6 call, 2 TNC, 2 personal (4 of 10 non-call based).
    # Youngest ten: 7 call, 1 TNC, 2 personal.
    blank_q10_at = {30, 62}

    def assign_q10(indices, categories):
        cats = list(categories)
        rng.shuffle(cats)
        for i, cat in zip(indices, cats):
            rows[i]["q10"] = rng.choice(Q10_TEXT[cat])

    assign_q10(young_idx, ["call_based"] * 7 + ["tnc_app"] + ["personal_vehicle"] * 2)
    assign_q10(old_idx, ["call_based"] * 6 + ["tnc_app"] * 2 + ["personal_vehicle"] * 2)
    answerable = [i for i in middle_idx if i not in blank_q10_at]
    assign_q10(answerable, ["call_based"] * 42 + ["tnc_app"] * 7
               + ["personal_vehicle"] * 19 + ["other"] * 6)
    for i in blank_q10_at:
        rows[i]["q10"] = ""

    # q11 is optional free text; leave it blank on the rows that already
    # miss q10 so the loader's "q11 never counts" rule is exercised.
    for i in range(n):
        if i not in blank_q10_at and rng.random() < 0.35:
            rows[i]["q11"] = rng.choice(Q11_TEXT)
        else:
            rows[i]["q11"] = ""
    return rows


def excluded_rows() -> list[dict]:
    """Four rows with two or more missing required fields."""
    base = {"age": "31", "sex": "female", "degree": "yes", "internet": "yes",
            "phone": "yes", "brand": "Samsung", "q7": "3", "q8": "4",
            "q9": "4", "q10": "call 911", "q11": ""}

    def variant(**blanks):
        row = dict(base)
        row.update({k: "" for k in blanks})
        return row

    return [
        variant(sex="", degree=""),
        variant(age="", q7="", q10=""),
        variant(internet="", phone=""),
        variant(brand="", q8="", q11=""),
    ]


def main() -> None:
    rng = random.Random(SEED)
    rows = build_rows(rng) + excluded_rows()
    rng.shuffle(rows)

    header = ["age", "sex", "degree", "internet", "phone", "brand",
              "q7", "q8", "q9", "q10", "q11"]
    targets = [ROOT / "data" / "survey_mandaluyong.csv",
               ROOT / "src" / "motorlance" / "data" / "survey_mandaluyong.csv"]
    for path in targets:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([row[col] for col in header])

    verify(targets[0])
    assert targets[0].read_bytes() == targets[1].read_bytes()
    print(f"wrote {len(rows)} rows to {' and '.join(str(t) for t in targets)}")


def verify(path: pathlib.Path) -> None:
    responses, excluded = load_survey(path)
    assert len(responses) == 96, len(responses)
    assert excluded == 4, excluded
    stats = tabulate(responses)
    assert stats.sex_percent["female"] == 60.0, stats.sex_percent
    assert stats.phone_percent == 100.0
    assert stats.internet_percent == 98.9
    assert stats.under_55_percent == 98.9
    assert stats.os_percent["ios"] == 25.0
    assert stats.regular_app_use_percent == 47.9
    assert stats.q10_percent["tnc_app"] == 10.6
    assert sum(stats.likert_counts["q9"].values()) == 96
    huawei = sum(1 for r in responses if r.brand and r.brand.lower() == "huawei")
    assert huawei == 3, huawei

    by_age = sorted(responses, key=lambda r: r.age)
    oldest, youngest = by_age[-10:], by_age[:10]
    non_call_old = sum(
        1 for r in oldest if categorize_q10(r.q10) in ("personal_vehicle", "tnc_app")
    )
    call_young = sum(1 for r in youngest if categorize_q10(r.q10) == "call_based")
    assert non_call_old == 4, non_call_old
    assert call_young == 7, call_young
    print("all marginals verified")


if __name__ == "__main__":
    main()
