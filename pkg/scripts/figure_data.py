"""Write the CSV data behind the four curve/level-set figures.

    python scripts/figure_data.py --out figures

The non-regular Moran construction (doubling schedule) gives the
beta_lower/beta_upper curves and their level-set estimates; the switched
Bernoulli measure (factorial schedule) gives b, B and the level-set
estimates on the admissible alpha window.
"""
import argparse
import sys
from pathlib import Path

from mfhs.cli import main as cli

CONFIGS = {
    "nonregular": "measure.family = NonRegularMoran\n",
    "switched": "measure.family = SwitchedBernoulli\nmeasure.p = 0.2\nmeasure.p_hat = 0.4\n",
    "fourletter": "measure.family = FourLetter\n",
}


def run(out: Path, oracle: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for name, text in CONFIGS.items():
        cfg = out / f"{name}.cfg"
        cfg.write_text(text)
        for command in ("spectra", "levelset"):
            argv = [command, "--config", str(cfg), "--out", str(out / name)]
            if oracle and command == "spectra":
                argv.append("--oracle")
            status |= cli(argv)
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("figures"))
    ap.add_argument("--oracle", action="store_true", help="add brute-force partition ratios")
    args = ap.parse_args()
    sys.exit(run(args.out, args.oracle))
