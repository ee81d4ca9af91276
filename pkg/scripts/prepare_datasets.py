"""Write the COMPAS and Adult CSVs used by the bundled manifests.

The raw files are taken from the ``responsibly`` wheel, which ships the
ProPublica two-year COMPAS extract and the UCI Adult files. Pass ``--wheel``
to use an already downloaded wheel; otherwise ``pip download`` fetches it.

    python scripts/prepare_datasets.py --out data/
"""
from __future__ import annotations

import argparse
import csv
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

COMPAS_MEMBER = "responsibly/dataset/compas/compas-scores-two-years.csv"
ADULT_MEMBER = "responsibly/dataset/adult/adult.data"

COMPAS_COLUMNS = [
    "sex", "age", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]
ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]


def _find_wheel(explicit: str | None, workdir: Path) -> Path:
    if explicit:
        return Path(explicit)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(workdir),
         "responsibly==0.1.2"],
        check=True,
    )
    return next(workdir.glob("responsibly-*.whl"))


def _compas(raw: str, out: Path) -> int:
    # ProPublica's published filter for the two-year analysis.
    reader = csv.DictReader(io.StringIO(raw))
    kept = 0
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPAS_COLUMNS)
        for row in reader:
            try:
                days = int(row["days_b_screening_arrest"])
            except ValueError:
                continue
            if not -30 <= days <= 30:
                continue
            if row["is_recid"] == "-1" or row["c_charge_degree"] == "O":
                continue
            if row["score_text"] == "N/A":
                continue
            writer.writerow([row[c] for c in COMPAS_COLUMNS])
            kept += 1
    return kept


def _adult(raw: str, out: Path) -> int:
    n = 0
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ADULT_COLUMNS)
        for line in raw.splitlines():
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != len(ADULT_COLUMNS):
                continue
            writer.writerow(parts)
            n += 1
    return n


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data")
    parser.add_argument("--wheel", default=None)
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = _find_wheel(args.wheel, Path(tmp))
        with zipfile.ZipFile(wheel) as zf:
            compas_raw = zf.read(COMPAS_MEMBER).decode("utf-8")
            adult_raw = zf.read(ADULT_MEMBER).decode("utf-8")
    print(f"compas.csv: {_compas(compas_raw, out / 'compas.csv')} rows")
    print(f"adult.csv: {_adult(adult_raw, out / 'adult.csv')} rows")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
