"""Side-by-side table of a repro.sh run against the reference accuracies.

Usage: python3 scripts/compare_reference.py RUN_DIR
"""
import argparse
from pathlib import Path

from msfnet.datagen import load_dataset
from msfnet.evaluate import predict_measures, side_by_side, tolerance_accuracy
from msfnet.neural import load_model


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("run_dir")
    args = ap.parse_args()
    run = Path(args.run_dir)
    ds = load_dataset(run / "dataset.jsonl")
    x, y = ds.arrays("test")
    reports = {}
    for name in ("mlp", "cnn"):
        path = run / f"{name}.json"
        if path.exists():
            reports[name] = tolerance_accuracy(predict_measures(load_model(path), x), y, model=name)
    text = side_by_side(reports)
    print(f"test split: {len(y)} samples")
    print(text)
    (run / "side_by_side.txt").write_text(text + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
