"""Validator node: mempool, chain storage, execution and consensus glue.

Finality is instant and the chain is append-only; there are no forks or
reorgs. A node that falls behind (for example the odd victim of an
equivocating proposer) is rescued out-of-band: whenever a peer receives
a consensus message for a height it has already finalized, it replies
with the sealed block, which the laggard verifies against the quorum
seals and adopts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import contract
from .consensus import (
    ConsensusConfig, ConsensusMessage, Engine, StepResult,
    validate_finalized_block,
)
from .crypto import KeyPair, Registry
from .errors import UnknownPublicId
from .model import (
    Address, Block, Event, Hash256, Receipt, Transaction, block_hash, tx_hash,
)


@dataclass(frozen=True, slots=True)
class TxGossip:
    tx: Transaction


@dataclass(frozen=True, slots=True)
class BlockAnnounce:
    block: Block


@dataclass(frozen=True, slots=True)
class TimerFire:
    node: Address
    epoch: int


@dataclass(frozen=True, slots=True)
class HeightStart:
    """Self-addressed continuation: begin consensus on the next height."""


@dataclass(frozen=True, slots=True)
class EventRecord:
    height: int
    tx_index: int
    emission_index: int
    event: Event


class Mempool:
    """FIFO pending pool; duplicates and unverifiable signatures never enter."""

    def __init__(self, registry: Registry) -> None:
        self.registry = registry
        self.pending: list[Transaction] = []
        self.seen: set[Hash256] = set()

    def add(self, tx: Transaction, executed_nonce: int) -> tuple[bool, Optional[str]]:
        h = tx_hash(tx)
        if h in self.seen:
            return False, "DuplicateTx"
        try:
            if not self.registry.verify_by_address(tx.sender, h, tx.signature):
                return False, "InvalidSignature"
        except UnknownPublicId:
            return False, "InvalidSignature"
        if tx.nonce < executed_nonce:
            return False, "StaleNonce"
        self.seen.add(h)
        self.pending.append(tx)
        return True, None

    def remove_included(self, txs: tuple[Transaction, ...]) -> None:
        included = {tx_hash(t) for t in txs}
        if included:
            self.pending = [t for t in self.pending if tx_hash(t) not in included]


class Chain:
    """Append-only finalized chain plus per-height execution snapshots."""

    def __init__(self, genesis: Block, genesis_ledger: contract.LedgerState) -> None:
        self.blocks: list[Block] = [genesis]
        self.ledgers: list[contract.LedgerState] = [genesis_ledger]
        self.receipts: dict[Hash256, Receipt] = {}
        self.receipts_by_height: list[list[Receipt]] = [[]]
        self.events: list[EventRecord] = []

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def head_height(self) -> int:
        return len(self.blocks) - 1

    @property
    def head_ledger(self) -> contract.LedgerState:
        return self.ledgers[-1]

    def append(self, block: Block, ledger: contract.LedgerState,
               receipts: list[Receipt]) -> None:
        assert block.height == self.head_height + 1
        assert block.parent_hash == block_hash(self.head)
        self.blocks.append(block)
        self.ledgers.append(ledger)
        self.receipts_by_height.append(receipts)
        for tx_index, receipt in enumerate(receipts):
            self.receipts[receipt.tx_hash] = receipt
            for emission_index, event in enumerate(receipt.events):
                self.events.append(EventRecord(block.height, tx_index,
                                               emission_index, event))


@dataclass
class NodeResult:
    outbound: list[tuple[object, Optional[Address]]] = field(default_factory=list)
    timer: Optional[tuple[int, int]] = None
    finalized: list[Block] = field(default_factory=list)
    steps: list[StepResult] = field(default_factory=list)
    restart: bool = False  # schedule a HeightStart continuation


class ValidatorNode:
    def __init__(self, key: KeyPair, config: ConsensusConfig, registry: Registry,
                 genesis: Block, block_gas_limit: int) -> None:
        self.key = key
        self.address = key.address
        self.config = config
        self.registry = registry
        self.block_gas_limit = block_gas_limit
        self.peers: list[Address] = [v for v in config.validators if v != key.address]
        self.chain = Chain(genesis, contract.genesis_ledger())
        self.mempool = Mempool(registry)
        self.engine = Engine(config, key, registry,
                             build_block=self.build_block,
                             validate_block=self.validate_block)
        # execution results for proposals validated at the current height,
        # keyed by block hash, so finalization does not re-execute
        self._exec_cache: dict[Hash256, tuple[contract.LedgerState, list[Receipt]]] = {}

    # -- lifecycle -------------------------------------------------------------

    def start(self, now: int) -> NodeResult:
        return self._wrap(self.engine.start_height(1, now), now)

    # -- block assembly and validation ------------------------------------------

    def build_block(self, height: int, round_: int) -> Block:
        parent = self.chain.head
        assert height == parent.height + 1
        txs: list[Transaction] = []
        total_gas = 0
        for tx in self.mempool.pending:
            if total_gas + tx.gas_limit > self.block_gas_limit:
                break
            txs.append(tx)
            total_gas += tx.gas_limit
        ledger, receipts = self._execute(self.chain.head_ledger, tuple(txs))
        block = Block(height, round_, block_hash(parent), self.address,
                      tuple(txs), contract.state_root(ledger.contract), ())
        self._exec_cache[block_hash(block)] = (ledger, receipts)
        return block

    def _execute(self, ledger: contract.LedgerState,
                 txs: tuple[Transaction, ...]) -> tuple[contract.LedgerState, list[Receipt]]:
        if not txs:
            return ledger, []
        new_ledger = ledger
        receipts: list[Receipt] = []
        for tx in txs:
            before = new_ledger.contract
            new_ledger, receipt = contract.apply_transaction(new_ledger, tx)
            # failed transactions must leave contract state untouched
            assert receipt.status.value == "SUCCESS" or new_ledger.contract is before
            receipts.append(receipt)
        return new_ledger, receipts

    def validate_block(self, block: Block) -> bool:
        parent = self.chain.head
        if block.height != parent.height + 1:
            return False
        if block.parent_hash != block_hash(parent):
            return False
        if block.proposer not in self.config.validators:
            return False
        if sum(t.gas_limit for t in block.txs) > self.block_gas_limit:
            return False
        for tx in block.txs:
            try:
                if not self.registry.verify_by_address(tx.sender, tx_hash(tx),
                                                       tx.signature):
                    return False
            except UnknownPublicId:
                return False
        ledger, receipts = self._execute(self.chain.head_ledger, block.txs)
        if contract.state_root(ledger.contract) != block.state_root:
            return False  # StateRootMismatch: refuse to prepare
        self._exec_cache[block_hash(block)] = (ledger, receipts)
        return True

    # -- transaction intake ------------------------------------------------------

    def submit_transaction(self, tx: Transaction) -> tuple[bool, Optional[str], NodeResult]:
        executed = self.chain.head_ledger.nonces.get(tx.sender, 0)
        accepted, reason = self.mempool.add(tx, executed)
        result = NodeResult()
        if accepted:
            for peer in self.peers:
                result.outbound.append((TxGossip(tx), peer))
        return accepted, reason, result

    # -- event handlers ------------------------------------------------------------

    def handle_payload(self, payload: object, now: int) -> NodeResult:
        if isinstance(payload, ConsensusMessage):
            return self.handle_consensus(payload, now)
        if isinstance(payload, TxGossip):
            _, _, result = self.submit_transaction(payload.tx)
            return result
        if isinstance(payload, BlockAnnounce):
            return self.handle_announce(payload.block, now)
        if isinstance(payload, HeightStart):
            return self.handle_height_start(now)
        raise TypeError(f"unknown payload {payload!r}")

    def handle_height_start(self, now: int) -> NodeResult:
        target = self.chain.head_height + 1
        if self.engine.height >= target:
            return NodeResult()  # already working on it
        return self._wrap(self.engine.start_height(target, now), now)

    def handle_consensus(self, msg: ConsensusMessage, now: int) -> NodeResult:
        if msg.height <= self.chain.head_height:
            # the sender lags behind; show it the sealed block it is missing
            result = NodeResult()
            if msg.height >= 1 and msg.sender in self.config.validators:
                sealed = self.chain.blocks[msg.height]
                result.outbound.append((BlockAnnounce(sealed), msg.sender))
            return result
        if msg.height > self.engine.height:
            return NodeResult()  # cannot use future heights yet
        return self._wrap(self.engine.handle_message(msg, now), now)

    def handle_timer(self, fire: TimerFire, now: int) -> NodeResult:
        return self._wrap(self.engine.handle_timer(fire.epoch, now), now)

    def handle_announce(self, block: Block, now: int) -> NodeResult:
        if block.height != self.chain.head_height + 1:
            return NodeResult()
        if not validate_finalized_block(block, self.config, self.registry,
                                        parent=self.chain.head):
            return NodeResult()
        cached = self._exec_cache.get(block_hash(block))
        if cached is None:
            ledger, receipts = self._execute(self.chain.head_ledger, block.txs)
            if contract.state_root(ledger.contract) != block.state_root:
                return NodeResult()
        else:
            ledger, receipts = cached
        result = NodeResult()
        self._adopt(block, ledger, receipts, result)
        return result

    # -- internals ------------------------------------------------------------------

    def _wrap(self, step: StepResult, now: int) -> NodeResult:
        result = NodeResult(steps=[step])
        result.timer = step.timer
        for msg in step.outbound:
            result.outbound.append((msg, None))
        if step.finalized is not None:
            ledger_receipts = self._exec_cache.get(block_hash(step.finalized))
            if ledger_receipts is None:
                ledger, receipts = self._execute(self.chain.head_ledger,
                                                 step.finalized.txs)
            else:
                ledger, receipts = ledger_receipts
            assert contract.state_root(ledger.contract) == step.finalized.state_root
            self._adopt(step.finalized, ledger, receipts, result)
        return result

    def _adopt(self, block: Block, ledger: contract.LedgerState,
               receipts: list[Receipt], result: NodeResult) -> None:
        self.chain.append(block, ledger, receipts)
        self.mempool.remove_included(block.txs)
        self._exec_cache.clear()
        result.finalized.append(block)
        result.restart = True

    # -- reads ----------------------------------------------------------------------

    def get_balance(self, caller: Address):
        return contract.get_balance(self.chain.head_ledger.contract, caller)

    def poll_events(self, since_cursor: int = 0) -> list[tuple[int, Event]]:
        records = self.chain.events[since_cursor:]
        return [(since_cursor + i + 1, rec.event) for i, rec in enumerate(records)]
