"""UTXO state, transaction execution and ledger sanitization.

Transactions are multi-input multi-output pay-to-public-key payments.
Sanitization is the sequential fold of :func:`execute` over an ordered
transaction list; :func:`sanitize_parallel` reproduces it bit-exactly with
a scoreboard-gated worker pool.
"""
from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .crypto import KeyPair, SignatureScheme, sha256
from .serialize import ByteReader, lp_bytes, u32, u64

CoinId = tuple[bytes, int]


@dataclass(frozen=True)
class Utxo:
    txid: bytes
    index: int
    value: int
    owner: bytes

    @property
    def id(self) -> CoinId:
        return (self.txid, self.index)


@dataclass(frozen=True)
class TxInput:
    txid: bytes
    index: int

    @property
    def id(self) -> CoinId:
        return (self.txid, self.index)


@dataclass(frozen=True)
class TxOutput:
    value: int
    owner: bytes


class Transaction:
    """Payment spending existing coins into new ones.

    ``signatures`` is a list of (public key, signature) pairs, one per
    input, each signing the body digest.  The transaction id is the
    SHA-256 of the body (inputs and outputs, signatures excluded), so two
    submissions of the same payment share one id.
    """

    __slots__ = ("inputs", "outputs", "signatures", "digest", "_body")

    def __init__(
        self,
        inputs: Sequence[TxInput],
        outputs: Sequence[TxOutput],
        signatures: Sequence[tuple[bytes, bytes]] = (),
    ):
        if not inputs:
            raise ValueError("transaction needs at least one input")
        if not outputs:
            raise ValueError("transaction needs at least one output")
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.signatures = tuple(signatures)
        self._body = self._serialize_body()
        self.digest = sha256(self._body)

    def _serialize_body(self) -> bytes:
        parts = [u32(len(self.inputs))]
        for txin in self.inputs:
            parts.append(txin.txid)
            parts.append(u32(txin.index))
        parts.append(u32(len(self.outputs)))
        for txout in self.outputs:
            parts.append(u64(txout.value))
            parts.append(lp_bytes(txout.owner))
        return b"".join(parts)

    @property
    def body(self) -> bytes:
        return self._body

    def serialize(self) -> bytes:
        parts = [self._body, u32(len(self.signatures))]
        for public, sig in self.signatures:
            parts.append(lp_bytes(public))
            parts.append(lp_bytes(sig))
        return b"".join(parts)

    def input_ids(self) -> tuple[CoinId, ...]:
        return tuple(txin.id for txin in self.inputs)

    def output_ids(self) -> tuple[CoinId, ...]:
        return tuple((self.digest, i) for i in range(len(self.outputs)))

    def fee(self, utxo_set: dict[CoinId, Utxo]) -> int:
        total_in = sum(utxo_set[i].value for i in self.input_ids())
        return total_in - sum(o.value for o in self.outputs)

    def signatures_well_formed(self, scheme: SignatureScheme) -> bool:
        """One signature per input, each verifying over the body digest.

        Ownership against the UTXO set is checked at execution time, not
        here.
        """
        if len(self.signatures) != len(self.inputs):
            return False
        return all(
            scheme.verify(public, self.digest, sig) for public, sig in self.signatures
        )

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Transaction({self.digest.hex()[:12]}, in={len(self.inputs)}, out={len(self.outputs)})"

    @classmethod
    def deserialize(cls, reader: "ByteReader") -> "Transaction":
        n_in = reader.u32()
        inputs = [TxInput(reader.digest(), reader.u32()) for _ in range(n_in)]
        n_out = reader.u32()
        outputs = [TxOutput(reader.u64(), reader.lp_bytes()) for _ in range(n_out)]
        n_sig = reader.u32()
        sigs = [(reader.lp_bytes(), reader.lp_bytes()) for _ in range(n_sig)]
        return cls(inputs, outputs, sigs)


def signed_transaction(
    scheme: SignatureScheme,
    inputs: Sequence[TxInput],
    outputs: Sequence[TxOutput],
    keys: Sequence[KeyPair],
) -> Transaction:
    """Build a transaction with one signature per input, keys in input order."""
    unsigned = Transaction(inputs, outputs)
    sigs = [(kp.public, scheme.sign(kp.secret, unsigned.digest)) for kp in keys]
    return Transaction(inputs, outputs, sigs)


@dataclass(frozen=True)
class Applied:
    pass


@dataclass(frozen=True)
class Rejected:
    reason: str  # MissingInput | BadSignature | ValueOverspend


APPLIED = Applied()


def execute(tx: Transaction, utxo_set: dict[CoinId, Utxo], scheme: SignatureScheme) -> Applied | Rejected:
    """Apply ``tx`` to ``utxo_set`` in place, or leave it untouched.

    Applied iff every input exists, the i-th signature's key matches the
    i-th input's owner and verifies, and total output value does not
    exceed total input value.
    """
    coins = []
    for txin in tx.inputs:
        utxo = utxo_set.get(txin.id)
        if utxo is None:
            return Rejected("MissingInput")
        coins.append(utxo)
    if len(tx.signatures) != len(tx.inputs):
        return Rejected("BadSignature")
    for utxo, (public, sig) in zip(coins, tx.signatures):
        if public != utxo.owner or not scheme.verify(public, tx.digest, sig):
            return Rejected("BadSignature")
    total_in = sum(c.value for c in coins)
    total_out = sum(o.value for o in tx.outputs)
    if total_out > total_in:
        return Rejected("ValueOverspend")
    for txin in tx.inputs:
        del utxo_set[txin.id]
    for i, txout in enumerate(tx.outputs):
        utxo_set[(tx.digest, i)] = Utxo(tx.digest, i, txout.value, txout.owner)
    return APPLIED


def sanitize(
    txs: Iterable[Transaction],
    utxo_set: dict[CoinId, Utxo],
    scheme: SignatureScheme,
) -> tuple[list[Transaction], dict[CoinId, Utxo]]:
    """Sequential fold of :func:`execute`; rejected transactions are skipped.

    Mutates and returns ``utxo_set``; the returned ledger lists applied
    transactions in input order.  A transaction appearing twice is
    rejected the second time because its inputs are gone.
    """
    applied = []
    for tx in txs:
        if execute(tx, utxo_set, scheme) is APPLIED:
            applied.append(tx)
    return applied, utxo_set


def sanitize_parallel(
    txs: Sequence[Transaction],
    utxo_set: dict[CoinId, Utxo],
    scheme: SignatureScheme,
    workers: int = 4,
    _schedule_hook: Callable[[Transaction], None] | None = None,
) -> tuple[list[Transaction], dict[CoinId, Utxo]]:
    """Scoreboard-gated parallel execution, bit-identical to :func:`sanitize`.

    A transaction is dispatched only when none of its input/output coin
    ids collide with any in-flight or earlier held transaction; colliding
    transactions wait and run in original order once the conflict clears.
    Coin-disjoint transactions commute, so the final (ledger, set) equals
    the sequential fold regardless of worker scheduling.

    ``_schedule_hook`` is a test seam that runs inside each worker before
    execution, used to randomize scheduling in stress tests.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        return sanitize(txs, utxo_set, scheme)

    n = len(txs)
    applied_flags = [False] * n
    coin_sets = [set(tx.input_ids()) | set(tx.output_ids()) for tx in txs]
    scoreboard: set[CoinId] = set()  # coins of in-flight and held txs
    lock = threading.Lock()
    done = threading.Condition(lock)
    in_flight = 0

    def run_one(pos: int) -> None:
        nonlocal in_flight
        if _schedule_hook is not None:
            _schedule_hook(txs[pos])
        # Coin-disjointness guarantees this execute touches no key any
        # concurrent execute reads or writes.
        result = execute(txs[pos], utxo_set, scheme)
        with done:
            applied_flags[pos] = result is APPLIED
            scoreboard.difference_update(coin_sets[pos])
            in_flight -= 1
            done.notify_all()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for pos in range(n):
            with done:
                # A colliding transaction blocks the dispatcher, which keeps
                # every later transaction behind it: dispatch order is the
                # original order whenever coins are shared.
                while not scoreboard.isdisjoint(coin_sets[pos]):
                    done.wait()
                scoreboard.update(coin_sets[pos])
                in_flight += 1
            pool.submit(run_one, pos)
        with done:
            while in_flight:
                done.wait()

    ledger = [txs[i] for i in range(n) if applied_flags[i]]
    return ledger, utxo_set


def conservation_check(
    total_before: int,
    ledger: Sequence[Transaction],
    utxo_set_after: dict[CoinId, Utxo],
    fees: Sequence[int],
) -> bool:
    """Total coin value after = before minus the fees of applied txs."""
    total_after = sum(u.value for u in utxo_set_after.values())
    return total_after == total_before - sum(fees)


def total_value(utxo_set: dict[CoinId, Utxo]) -> int:
    return sum(u.value for u in utxo_set.values())


def export_snapshot(utxo_set: dict[CoinId, Utxo]) -> str:
    """Canonical JSON snapshot, sorted by (txid, index)."""
    rows = [
        {"txid": u.txid.hex(), "index": u.index, "value": u.value, "owner": u.owner.hex()}
        for u in utxo_set.values()
    ]
    rows.sort(key=lambda r: (r["txid"], r["index"]))
    return json.dumps(rows, separators=(",", ":"))


def import_snapshot(text: str) -> dict[CoinId, Utxo]:
    utxo_set: dict[CoinId, Utxo] = {}
    for row in json.loads(text):
        utxo = Utxo(
            txid=bytes.fromhex(row["txid"]),
            index=row["index"],
            value=row["value"],
            owner=bytes.fromhex(row["owner"]),
        )
        utxo_set[utxo.id] = utxo
    return utxo_set
