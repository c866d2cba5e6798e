"""Three-stage desk training run: prior, refine with TFID, refine without.

    python3 scripts/desk_experiment.py --out runs/desk
"""
import argparse
import json
import logging

from phaseforge.experiments import desk_run
from phaseforge.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="directory for logs and checkpoints")
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--n-train", type=int, default=64)
    ap.add_argument("--json", default=None, help="write the summary here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    res = desk_run(TrainConfig(epochs=args.epochs), n_train=args.n_train, out_dir=args.out)
    summary = {"first_loss_p": res.first_loss_p, "final_loss_p": res.final_loss_p,
               "heldout_pd": res.pd, "seconds": res.seconds}
    print(json.dumps(summary, indent=2))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
