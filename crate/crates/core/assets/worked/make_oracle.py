"""Writes the worked scoring example: a hub forecast, matching observations,
and the expected WIS per cell computed directly as mean pinball loss."""

from datetime import date, timedelta
from fractions import Fraction
import csv

LEVELS = ["0.01", "0.025", "0.05", "0.1", "0.15", "0.2", "0.25", "0.3", "0.35", "0.4", "0.45",
          "0.5", "0.55", "0.6", "0.65", "0.7", "0.75", "0.8", "0.85", "0.9", "0.95", "0.975", "0.99"]
REF = date(2024, 1, 6)
CELLS = [
    # location, horizon, median, spread, skew, observed
    ("CA", 1, 120.0, 30.0, 1.0, 131.0),
    ("CA", 2, 140.0, 45.0, 1.3, 95.5),
    ("NY", 1, 64.0, 12.0, 1.0, 64.0),
    ("NY", 2, 70.0, 20.0, 0.8, 150.0),
    ("TX", 1, 0.0, 0.0, 1.0, 0.0),
    ("TX", 2, 210.0, 60.0, 1.5, 12.25),
]


def quantiles(median, spread, skew):
    out = []
    for lv in LEVELS:
        d = float(lv) - 0.5
        scale = skew if d > 0 else 1.0
        out.append(round(max(median + 4.0 * spread * scale * d * abs(d) ** 0.3, 0.0), 3))
    return out


def pinball_wis(q, y):
    # exact rational arithmetic, converted once at the end
    y = Fraction(y)
    total = Fraction(0)
    for lv, v in zip(LEVELS, q):
        tau, v = Fraction(lv), Fraction(v)
        total += 2 * (tau * (y - v) if y >= v else (1 - tau) * (v - y))
    return float(total / len(LEVELS))


with open("forecast.csv", "w", newline="") as f, open("observations.csv", "w", newline="") as o, \
        open("wis_oracle.csv", "w", newline="") as w:
    fw, ow, ww = csv.writer(f), csv.writer(o), csv.writer(w)
    fw.writerow(["reference_date", "target", "horizon", "target_end_date", "location",
                 "output_type", "output_type_id", "value"])
    ow.writerow(["location", "target_end_date", "value"])
    ww.writerow(["location", "horizon", "wis"])
    for loc, h, med, spread, skew, y in CELLS:
        end = REF + timedelta(days=7 * (h - 1))
        q = quantiles(med, spread, skew)
        for lv, v in zip(LEVELS, q):
            fw.writerow([REF, "wk inc flu hosp", h, end, loc, "quantile", lv, v])
        ow.writerow([loc, end, y])
        ww.writerow([loc, h, repr(pinball_wis(q, y))])
