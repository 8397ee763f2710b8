"""Purchased-level buckets against collective and mean net profit for one simulated run.

    python scripts/levels_vs_profit.py --arrivals 10000 --purchase-prob 0.3 --seed 1 [--plot out.png]
"""

import argparse

from forsage_sim.analytics import levels_distribution, profit_loss
from forsage_sim.sim import RecruitmentModel, simulate
from forsage_sim.units import to_eth_float


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="uniform", choices=["uniform", "preferential", "chain"])
    ap.add_argument("--arrivals", type=int, default=10_000)
    ap.add_argument("--purchase-prob", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--plot", help="write a two-panel PNG here (needs matplotlib)")
    args = ap.parse_args()

    res = simulate(RecruitmentModel(args.model, args.arrivals, args.purchase_prob, seed=args.seed))
    report = profit_loss(res.events, res.txlog, state=res.state)
    dist = levels_distribution(res.state, report.net_by_address(), include_owner=False)

    print(f"users={sum(dist.counts.values())} mean={dist.mean:.3f} median={dist.median:g} sd={dist.sd:.3f}")
    print(f"{'levels':>7}{'users':>8}{'collective ETH':>18}{'mean ETH':>12}")
    for n, count in dist.counts.items():
        total = to_eth_float(dist.collective_net[n])
        print(f"{n:>7}{count:>8}{total:>18.4f}{total / count:>12.4f}")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        xs = list(dist.counts)
        fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
        top.bar(xs, [dist.counts[x] for x in xs])
        top.set_yscale("log")
        top.set_ylabel("users")
        bottom.bar(xs, [to_eth_float(dist.collective_net[x]) for x in xs])
        bottom.set_ylabel("collective net (ETH)")
        bottom.set_xlabel("levels purchased")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)


if __name__ == "__main__":
    main()
