"""Sweep seeds and purchase probabilities; print loser share, owner take and spillover.

    python scripts/seed_sweep.py --arrivals 5000 --seeds 8 --probs 0 0.3 0.6
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from itertools import product

from forsage_sim.analytics import profit_loss
from forsage_sim.sim import RecruitmentModel, simulate
from forsage_sim.units import format_eth


def one(args):
    kind, arrivals, prob, seed = args
    model = RecruitmentModel(kind, arrivals=arrivals, purchase_prob=prob, seed=seed)
    res = simulate(model)
    report = profit_loss(res.events, res.txlog, state=res.state, k=5)
    nets = report.net_by_address()
    owner_net = nets.pop(model.owner)
    losing = sum(v < 0 for v in nets.values()) / max(len(nets), 1)
    return kind, prob, seed, losing, owner_net, report.spillover.spillover_fraction, res.digest[:12]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="uniform", choices=["uniform", "preferential", "chain"])
    ap.add_argument("--arrivals", type=int, default=2000)
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--probs", type=float, nargs="+", default=[0.0, 0.3, 0.6])
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    jobs = [(args.model, args.arrivals, p, s) for p, s in product(args.probs, range(args.seeds))]
    print(f"{'model':<13}{'p':>5}{'seed':>6}{'losing':>9}{'owner net ETH':>24}{'spill':>8}  digest")
    with ProcessPoolExecutor(args.workers) as pool:
        for kind, p, seed, losing, owner, spill, digest in pool.map(one, jobs):
            print(f"{kind:<13}{p:>5.2f}{seed:>6}{losing:>9.3f}{format_eth(owner):>24}{spill:>8.4f}  {digest}")


if __name__ == "__main__":
    main()
