"""Desk-scale deterministic simulator for the Prism multi-chain PoW protocol.

Submodules follow the build's layering:

* :mod:`prismsim.merkle`, :mod:`prismsim.blocks` — commitments, block
  types, sortition and validation
* :mod:`prismsim.ledger` — UTXO state, sanitization, parallel execution
* :mod:`prismsim.chain` — per-node blockchain state machine
* :mod:`prismsim.mining` — superblock assembly and simulated mining
* :mod:`prismsim.confirmation` — confidence-interval confirmation and
  ledger formation
* :mod:`prismsim.netsim` — deterministic discrete-event network simulator
* :mod:`prismsim.adversary` — attack strategies
* :mod:`prismsim.baseline` — longest-chain protocol and reversal analytics
* :mod:`prismsim.cli` — ``run`` / ``batch`` / ``curves`` experiment driver
"""

__version__ = "0.1.0"
