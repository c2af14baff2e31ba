"""Offline integrity audit of a chain dump.

Re-executes every block from genesis and re-verifies parent links,
heights, commit seals and state roots. The verdict names the first
diverging height so corrupted dumps are easy to localize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from . import contract
from .config import GenesisConfig
from .consensus import ConsensusConfig, validate_finalized_block
from .crypto import KeyPair, Registry
from .errors import CorruptDump, UnknownPublicId
from .model import Block, block_from_json, block_hash, hx, receipt_to_json, tx_hash
from .simulation import make_genesis_block


@dataclass(frozen=True)
class ReplayVerdict:
    ok: bool
    height: Optional[int] = None
    reason: Optional[str] = None

    def __str__(self) -> str:
        if self.ok:
            return "OK"
        return f"CORRUPT at height {self.height}: {self.reason}"


def _load_blocks(data: bytes) -> list[tuple[Block, dict]]:
    blocks = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            blocks.append((block_from_json(obj), obj))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptDump(f"line {lineno}: {exc}") from None
    if not blocks:
        raise CorruptDump("empty chain dump")
    return blocks


def replay_chain(genesis_cfg: GenesisConfig, dump: bytes) -> ReplayVerdict:
    registry = Registry()
    for raw in genesis_cfg.key_provider.private_keys:
        registry.register(KeyPair.from_seed(raw))
    validator_keys = genesis_cfg.validator_keys()
    for key in validator_keys:
        registry.register(key)
    config = ConsensusConfig(tuple(k.address for k in validator_keys),
                             genesis_cfg.base_round_timeout)

    blocks = _load_blocks(dump)
    expected_genesis = make_genesis_block()
    first, first_obj = blocks[0]
    if first != expected_genesis:
        return ReplayVerdict(False, 0, "genesis block mismatch")
    if first_obj.get("hash") != hx(block_hash(expected_genesis)):
        return ReplayVerdict(False, 0, "declared genesis hash mismatch")

    ledger = contract.genesis_ledger()
    parent = expected_genesis
    for block, obj in blocks[1:]:
        h = block.height
        if obj.get("hash") != hx(block_hash(block)):
            return ReplayVerdict(False, h, "declared hash mismatch")
        if not validate_finalized_block(block, config, registry, parent=parent):
            return ReplayVerdict(False, h, "seal or linkage check failed")
        if sum(t.gas_limit for t in block.txs) > genesis_cfg.block_gas_limit:
            return ReplayVerdict(False, h, "block gas limit exceeded")
        for tx in block.txs:
            try:
                if not registry.verify_by_address(tx.sender, tx_hash(tx),
                                                  tx.signature):
                    return ReplayVerdict(False, h, "bad transaction signature")
            except UnknownPublicId:
                return ReplayVerdict(False, h, "transaction from unknown sender")
        for tx in block.txs:
            ledger, _ = contract.apply_transaction(ledger, tx)
        if contract.state_root(ledger.contract) != block.state_root:
            return ReplayVerdict(False, h, "state root mismatch")
        parent = block
    return ReplayVerdict(True)


def receipt_from_dump(genesis_cfg: GenesisConfig, dump: bytes,
                      wanted_tx_hash: bytes) -> Optional[dict]:
    """Re-derive the receipt of one transaction from an intact dump.

    Returns the receipt as a JSON-ready dict annotated with the block
    height, or None if the transaction is not in the chain.
    """
    verdict = replay_chain(genesis_cfg, dump)
    if not verdict.ok:
        raise CorruptDump(str(verdict))
    ledger = contract.genesis_ledger()
    for block, _ in _load_blocks(dump):
        for tx in block.txs:
            ledger, receipt = contract.apply_transaction(ledger, tx)
            if receipt.tx_hash == wanted_tx_hash:
                obj = receipt_to_json(receipt)
                obj["height"] = block.height
                return obj
    return None
