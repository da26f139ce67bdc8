"""Write the radicalisation fixtures to models/ as JSON model files."""

from __future__ import annotations

import argparse
from pathlib import Path

from ntdceg import io
from ntdceg.composite import example_plan
from ntdceg.fixtures import panel2_model, radicalisation_dbn, radicalisation_model

LEVELS = ("N", "R", "T")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=Path(__file__).resolve().parent.parent / "models", type=Path)
    args = parser.parse_args()
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    io.save_model(radicalisation_model(), out / "radicalisation.json", LEVELS)
    io.save_model(panel2_model(), out / "panel2.json", LEVELS)
    (out / "radicalisation_dbn.json").write_text(io.dumps(io.dbn_to_dict(radicalisation_dbn())), encoding="utf-8")

    # the merge plan points at the two panel files instead of inlining them
    plan = io.plan_to_dict(example_plan())
    for panel, name in zip(plan["panels"], ("radicalisation.json", "panel2.json")):
        del panel["model"]
        panel["model_file"] = name
    (out / "composite_plan.json").write_text(io.dumps(plan), encoding="utf-8")
    for p in sorted(out.glob("*.json")):
        print(p)


if __name__ == "__main__":
    main()
