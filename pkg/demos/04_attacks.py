"""Attack scenarios side by side: censorship, balancing, spam, double-spend.

Each section runs a small seeded experiment and prints the headline
numbers next to the attack-free baseline.
"""
from prismsim.config import resolve
from prismsim.netsim import run

BASE = {
    "duration": 60.0,
    "topology": {"nodes": 8, "degree": 4, "delay_s": 0.1},
    "prism": {
        "m": 21,
        "rate_voter_per_chain": 0.5,
        "rate_tx": 1.0,
        "rate_prop": 0.6,
        "tx_block_capacity": 50,
        "beta": 0.30,
        "epsilon": 1e-3,
        "vote_rule": "most_voted",
    },
    "workload": {"tps": 80.0},
}

free = run(resolve(BASE), seed=1).report
print("=== attack-free baseline ===")
print(f"sanitized tps {free.throughput['confirmed_sanitized_tps']:.1f}, "
      f"latency median {free.latency['median_s']:.1f}s")
print()

print("=== censorship: 25% of miners publish empty blocks ===")
cens = run(resolve({**BASE, "adversary": {"strategy": "censorship", "fraction": 0.25}}), seed=1).report
ratio = cens.throughput["confirmed_sanitized_tps"] / free.throughput["confirmed_sanitized_tps"]
print(f"sanitized tps {cens.throughput['confirmed_sanitized_tps']:.1f} "
      f"({ratio:.0%} of baseline, tracks the honest fraction), "
      f"latency {cens.latency['median_s']:.1f}s")
print()

print("=== balancing: adversary props up the runner-up at every level ===")
for fraction in (0.1, 0.25):
    bal = run(
        resolve({**BASE, "adversary": {"strategy": "balancing", "fraction": fraction}}),
        seed=1,
    ).report
    print(f"fraction {fraction:.2f}: latency median {bal.latency['median_s']:.1f}s "
          f"(baseline {free.latency['median_s']:.1f}s), "
          f"tps {bal.throughput['confirmed_sanitized_tps']:.1f}")
print()

print("=== spamming: conflicting payments blasted at every node ===")
spam_base = {
    "duration": 30.0,
    "topology": {"kind": "regular", "nodes": 20, "degree": 4, "delay_s": 0.12},
    "prism": {"m": 10, "rate_voter_per_chain": 0.3, "rate_tx": 160.0, "rate_prop": 0.2},
    "workload": {"tps": 0.0},
    "spam": {"enabled": True, "tps": 2.0, "jitter": {"kind": "uniform", "max_s": 5.0}},
}
spam = run(resolve(spam_base), seed=1).report.spam
print(f"uniform jitter up to 5s: {spam['inclusions']} spam copies mined vs "
      f"{spam['baseline_inclusions']} without the defence "
      f"(normalized {spam['normalized']:.2f})")
print()

print("=== private double-spend: withheld candidate plus private voter forks ===")
priv_cfg = resolve(
    {
        **BASE,
        "duration": 40.0,
        "prism": {**BASE["prism"], "m": 100, "rate_voter_per_chain": 0.4},
        "workload": {"tps": 5.0},
        "adversary": {
            "strategy": "private_double_spend",
            "fraction": 0.30,
            "target_level": 1,
        },
    }
)
priv = run(priv_cfg, seed=1).report
print(f"attack released: {priv.attack['released']}, "
      f"confirmed leader reversed: {priv.attack['success']} "
      f"(confirmation held at epsilon {priv.confirmation['epsilon']})")
