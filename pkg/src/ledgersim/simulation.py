"""Single-threaded deterministic simulation of the whole validator network.

Everything observable is a pure function of (genesis, scheduled client
commands, seed): event ordering comes from the queue's (time, seq) total
order, randomness from named seed-derived streams, and all iteration
runs over insertion-ordered or explicitly sorted structures. Two runs
with the same inputs produce byte-identical traces.

Byzantine behaviors are applied at the network boundary: a SILENT
node's outbound vanishes, an EQUIVOCATE node shows conflicting
proposals to the two halves of its peers, and an INVALID_PROPOSER node
broadcasts proposals in rounds it does not own. The faulty node's own
engine keeps running the honest protocol internally.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from . import contract
from .config import GenesisConfig
from .consensus import (
    ConsensusConfig, ConsensusMessage, Phase, proposer_for, make_message,
    MsgKind,
)
from .crypto import KeyPair, Registry, sign
from .errors import NotDeployed
from .keccak import keccak256
from .model import (
    Address, Block, Hash256, Transaction, TxPayload, Signature,
    ZERO_ADDRESS, ZERO_HASH, block_hash, hx, tx_hash,
)
from .netsim import (
    Behavior, ByzantineSpec, EvKind, EventQueue, Network, byzantine_transform,
    payload_kind, rng_stream,
)
from .node import HeightStart, NodeResult, TimerFire, ValidatorNode


@dataclass(frozen=True, slots=True)
class ClientTx:
    label: int
    key: KeyPair
    payload: TxPayload


@dataclass(frozen=True, slots=True)
class ClientQuery:
    label: int
    caller: Address


@dataclass(frozen=True, slots=True)
class ClientFault:
    spec: ByzantineSpec


@dataclass(frozen=True, slots=True)
class ClientSetGst:
    pass


def make_genesis_block() -> Block:
    state = contract.fresh_state()
    return Block(0, 0, ZERO_HASH, ZERO_ADDRESS, (),
                 contract.state_root(state), ())


class Simulation:
    def __init__(self, genesis: GenesisConfig, *, seed: Optional[int] = None,
                 horizon: int = 2000, collect_traces: bool = True) -> None:
        self.genesis = genesis
        self.horizon = horizon
        self.seed = genesis.seed if seed is None else seed

        self.registry = Registry()
        for raw in genesis.key_provider.private_keys:
            self.registry.register(KeyPair.from_seed(raw))
        self.validator_keys = genesis.validator_keys()
        for key in self.validator_keys:
            self.registry.register(key)

        self.config = ConsensusConfig(
            validators=tuple(k.address for k in self.validator_keys),
            base_round_timeout=genesis.base_round_timeout,
        )
        genesis_block = make_genesis_block()
        self.nodes: dict[Address, ValidatorNode] = {}
        for key in self.validator_keys:
            self.nodes[key.address] = ValidatorNode(
                key, self.config, self.registry, genesis_block,
                genesis.block_gas_limit)

        self.queue = EventQueue()
        self.net_trace: Optional[list] = [] if collect_traces else None
        params = replace(genesis.network_params, seed=self.seed)
        self.network = Network(params, self.queue, self.net_trace)
        self.consensus_trace: Optional[list] = [] if collect_traces else None

        self.byzantine: dict[Address, ByzantineSpec] = {}
        self._ever_byzantine: set[Address] = set()
        self._node_rngs = {
            key.address: rng_stream(self.seed, f"node:{i}")
            for i, key in enumerate(self.validator_keys)
        }
        self._byz_round_seen: dict[Address, tuple[int, int]] = {}

        self.client_nonces: dict[Address, int] = {}
        self.submissions: list[dict] = []
        self.queries: list[dict] = []
        self.finalized_hashes: dict[int, dict[Address, Hash256]] = {}
        self.safety_violation: Optional[dict] = None
        self._started = False

    # -- fault and command scheduling -----------------------------------------

    def inject_fault(self, spec: ByzantineSpec) -> None:
        if spec.node not in self.nodes:
            raise ValueError("fault target is not a validator")
        self.byzantine[spec.node] = spec
        self._ever_byzantine.add(spec.node)

    def honest_addresses(self) -> list[Address]:
        return [a for a in self.config.validators if a not in self._ever_byzantine]

    def reference_node(self) -> ValidatorNode:
        honest = self.honest_addresses()
        return self.nodes[honest[0] if honest else self.config.validators[0]]

    def schedule_tx(self, at_time: int, key: KeyPair, payload: TxPayload,
                    label: int = -1) -> None:
        self.queue.schedule(at_time, EvKind.CLIENT, None,
                            ClientTx(label, key, payload))

    def schedule_query(self, at_time: int, caller: Address, label: int = -1) -> None:
        self.queue.schedule(at_time, EvKind.CLIENT, None, ClientQuery(label, caller))

    def schedule_fault(self, at_time: int, spec: ByzantineSpec) -> None:
        # the target counts as byzantine for the whole run
        self._ever_byzantine.add(spec.node)
        self.queue.schedule(at_time, EvKind.CLIENT, None, ClientFault(spec))

    def schedule_set_gst(self, at_time: int) -> None:
        self.queue.schedule(at_time, EvKind.CLIENT, None, ClientSetGst())

    # -- run loop -----------------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for address in self.config.validators:
            node = self.nodes[address]
            self._route(node, node.start(0), "START", 0)

    def step(self) -> bool:
        """Process one event; returns False when the queue is empty."""
        if not self._started:
            self.start()
        if len(self.queue) == 0:
            return False
        ev = self.queue.next_event()
        now = self.queue.now
        if ev.kind is EvKind.CLIENT:
            self._exec_client(ev.payload, now)
            return True
        node = self.nodes[ev.target]
        if ev.kind is EvKind.TIMER:
            result = node.handle_timer(ev.payload, now)
            self._route(node, result, "TIMER", now)
        else:
            result = node.handle_payload(ev.payload, now)
            self._route(node, result, payload_kind(ev.payload), now)
        return True

    def run(self, until: Optional[int] = None) -> None:
        limit = self.horizon if until is None else until
        if not self._started:
            self.start()
        while len(self.queue) > 0:
            next_time = self.queue.peek_time()
            if next_time is None or next_time > limit:
                break
            self.step()

    def run_until_min_height(self, height: int, cap: Optional[int] = None) -> bool:
        """Run until every honest node finalized `height`; True on success."""
        limit = self.horizon if cap is None else cap
        if not self._started:
            self.start()
        while self.min_honest_height() < height:
            next_time = self.queue.peek_time()
            if next_time is None or next_time > limit:
                return False
            self.step()
        return True

    # -- client commands ---------------------------------------------------------

    def build_tx(self, key: KeyPair, payload: TxPayload) -> Transaction:
        nonce = self.client_nonces.get(key.address, 0)
        self.client_nonces[key.address] = nonce + 1
        unsigned = Transaction(key.address, nonce, payload,
                               contract.gas_for(payload),
                               self.genesis.gas_price, Signature(b""))
        return replace(unsigned, signature=sign(key, tx_hash(unsigned)))

    def submit_to_all(self, tx: Transaction, now: int, label: int = -1) -> dict:
        record = {"label": label, "txHash": hx(tx_hash(tx)), "accepted": []}
        for address in self.config.validators:
            node = self.nodes[address]
            accepted, reason, result = node.submit_transaction(tx)
            record["accepted"].append({"node": hx(address), "ok": accepted,
                                       "reason": reason})
            self._route(node, result, "SUBMIT", now)
        self.submissions.append(record)
        return record

    def _exec_client(self, payload: object, now: int) -> None:
        if isinstance(payload, ClientTx):
            tx = self.build_tx(payload.key, payload.payload)
            self.submit_to_all(tx, now, payload.label)
        elif isinstance(payload, ClientQuery):
            values = []
            for address in self.honest_addresses():
                node = self.nodes[address]
                try:
                    value = str(int(node.get_balance(payload.caller)))
                except NotDeployed:
                    value = "NotDeployed"
                values.append({"node": hx(address), "value": value})
            self.queries.append({"label": payload.label,
                                 "caller": hx(payload.caller),
                                 "time": now, "values": values})
        elif isinstance(payload, ClientFault):
            self.byzantine[payload.spec.node] = payload.spec
            self._ever_byzantine.add(payload.spec.node)
        elif isinstance(payload, ClientSetGst):
            self.network.set_gst_now()
        else:
            raise TypeError(f"unknown client payload {payload!r}")

    # -- routing -------------------------------------------------------------------

    def _route(self, node: ValidatorNode, result: NodeResult, input_kind: str,
               now: int) -> None:
        spec = self.byzantine.get(node.address)
        if spec is not None and spec.behavior is Behavior.SILENT:
            directed: list[tuple[object, Optional[Address]]] = []
        else:
            broadcast_consensus = [p for p, to in result.outbound
                                   if isinstance(p, ConsensusMessage) and to is None]
            directed = [(p, to) for p, to in result.outbound
                        if not (isinstance(p, ConsensusMessage) and to is None)]
            transformed = byzantine_transform(
                spec, broadcast_consensus, self._node_rngs[node.address],
                key=node.key, peers=node.peers,
                variant_factory=lambda b: self._equivocation_variant(node, b))
            directed = transformed + directed

        for payload, to in directed:
            if to is None:
                for peer in node.peers:
                    self.network.send(payload, node.address, peer, now)
            else:
                self.network.send(payload, node.address, to, now)

        if result.timer is not None:
            deadline, epoch = result.timer
            self.queue.schedule(deadline, EvKind.TIMER, node.address,
                                TimerFire(node.address, epoch))
        if result.restart:
            self.queue.schedule(now + 1, EvKind.DELIVER, node.address,
                                HeightStart())
        for block in result.finalized:
            self._record_finalized(node, block)
        if self.consensus_trace is not None:
            for step in result.steps:
                self.consensus_trace.append({
                    "node": hx(node.address),
                    "logicalTime": now,
                    "input": input_kind,
                    "phaseBefore": step.phase_before.value,
                    "phaseAfter": step.phase_after.value,
                    "outbound": len(step.outbound),
                    "discards": step.discards,
                })
        self._maybe_forge_proposal(node, spec, now)

    def _maybe_forge_proposal(self, node: ValidatorNode,
                              spec: Optional[ByzantineSpec], now: int) -> None:
        if spec is None or spec.behavior is not Behavior.INVALID_PROPOSER:
            return
        at = (node.engine.height, node.engine.round)
        if self._byz_round_seen.get(node.address) == at:
            return
        self._byz_round_seen[node.address] = at
        height, round_ = at
        if node.engine.phase is Phase.FINALIZED:
            return
        if proposer_for(height, round_, self.config) == node.address:
            return  # its legitimate proposals are already honest
        block = node.build_block(height, round_)
        forged = make_message(node.key, MsgKind.PRE_PREPARE, height, round_,
                              block_hash(block), proposal=block)
        for peer in node.peers:
            self.network.send(forged, node.address, peer, now)

    def _equivocation_variant(self, node: ValidatorNode, block: Block) -> Block:
        parent_ledger = node.chain.head_ledger
        if len(block.txs) >= 2:
            txs = tuple(reversed(block.txs))
            ledger, _ = node._execute(parent_ledger, txs)
            return replace(block, txs=txs,
                           state_root=contract.state_root(ledger.contract))
        if len(block.txs) == 1:
            return replace(block, txs=(),
                           state_root=contract.state_root(parent_ledger.contract))
        # nothing to reorder in an empty block: present a tampered state
        # root instead, which honest validators will refuse to prepare
        return replace(block, state_root=Hash256(keccak256(block.state_root)))

    # -- bookkeeping ------------------------------------------------------------------

    def _record_finalized(self, node: ValidatorNode, block: Block) -> None:
        entry = self.finalized_hashes.setdefault(block.height, {})
        entry[node.address] = block_hash(block)
        if node.address in self._ever_byzantine or self.safety_violation:
            return
        for other, other_hash in entry.items():
            if other in self._ever_byzantine:
                continue
            if other_hash != entry[node.address]:
                self.safety_violation = {
                    "height": block.height,
                    "nodes": [hx(node.address), hx(other)],
                    "hashes": [hx(entry[node.address]), hx(other_hash)],
                }

    # -- end-of-run inspection ----------------------------------------------------------

    def finalized_height(self, address: Address) -> int:
        return self.nodes[address].chain.head_height

    def min_honest_height(self) -> int:
        return min(self.finalized_height(a) for a in self.honest_addresses())

    def conservation_ok(self, address: Address) -> bool:
        node = self.nodes[address]
        total = 0
        for receipts in node.chain.receipts_by_height:
            for receipt in receipts:
                if receipt.status.value != "SUCCESS":
                    continue
                for event in receipt.events:
                    name = type(event).__name__
                    if name == "FundsAdded":
                        total += int(event.value)
                    elif name == "AllowanceSent":
                        total -= int(event.amount)
        state = node.chain.head_ledger.contract
        org_balance = int(state.balances.get(state.organization, 0))
        return org_balance == total
