"""Genesis file loading and the private-key provider.

The genesis file is strict JSON with exactly these fields: networkId,
validators, blockGasLimit, gasPrice, gst, delta, preGstMaxDelay,
preGstLossProb, seed, baseRoundTimeout, and keyProvider with
privateKeys, rpcUrl, min, max. Unknown fields are rejected and
parse(emit(config)) round-trips.

Validator entries are 32-byte key seeds (64 hex chars) or 20-byte
addresses (40 hex chars); an address form must match a key in the
provider, since validators have to sign consensus messages. The
provider's [min, max] range is inclusive on both ends. rpcUrl is kept
as an opaque non-empty label; the simulator has no remote endpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .crypto import KeyPair
from .errors import InvalidRange, MalformedConfig, MissingField
from .model import Address, hx, unhx
from .netsim import NetworkParams


@dataclass(frozen=True)
class KeyProvider:
    private_keys: tuple[bytes, ...]
    rpc_url: str
    min_index: int
    max_index: int


@dataclass(frozen=True)
class GenesisConfig:
    network_id: int
    validators: tuple[bytes, ...]  # 32-byte seeds, normalized
    block_gas_limit: int
    gas_price: int
    gst: int
    delta: int
    pre_gst_max_delay: int
    pre_gst_loss_prob: float
    seed: int
    base_round_timeout: int
    key_provider: KeyProvider

    @property
    def network_params(self) -> NetworkParams:
        return NetworkParams(self.gst, self.delta, self.pre_gst_max_delay,
                             self.pre_gst_loss_prob, self.seed)

    def validator_keys(self) -> list[KeyPair]:
        return [KeyPair.from_seed(seed) for seed in self.validators]

    def validator_addresses(self) -> list[Address]:
        return [k.address for k in self.validator_keys()]


def active_keys(provider: KeyProvider) -> list[KeyPair]:
    """Keys at indices [min, max], both inclusive."""
    return [KeyPair.from_seed(provider.private_keys[i])
            for i in range(provider.min_index, provider.max_index + 1)]


_TOP_FIELDS = ("networkId", "validators", "blockGasLimit", "gasPrice", "gst",
               "delta", "preGstMaxDelay", "preGstLossProb", "seed",
               "baseRoundTimeout", "keyProvider")
_PROVIDER_FIELDS = ("privateKeys", "rpcUrl", "min", "max")


def _require(obj: dict, fields: tuple[str, ...], where: str) -> None:
    for name in fields:
        if name not in obj:
            raise MissingField(f"{where}: missing field {name!r}")
    for name in obj:
        if name not in fields:
            raise MalformedConfig(f"{where}: unknown field {name!r}")


def _uint(obj: dict, name: str, minimum: int = 0) -> int:
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedConfig(f"field {name!r} must be an integer")
    if value < minimum:
        raise InvalidRange(f"field {name!r} must be >= {minimum}")
    return value


def parse_genesis(data: bytes) -> GenesisConfig:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedConfig(f"genesis is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedConfig("genesis must be a JSON object")
    _require(obj, _TOP_FIELDS, "genesis")

    provider_obj = obj["keyProvider"]
    if not isinstance(provider_obj, dict):
        raise MalformedConfig("keyProvider must be an object")
    _require(provider_obj, _PROVIDER_FIELDS, "keyProvider")

    raw_keys = provider_obj["privateKeys"]
    if not isinstance(raw_keys, list) or not raw_keys:
        raise MalformedConfig("privateKeys must be a non-empty list")
    private_keys = []
    for entry in raw_keys:
        try:
            raw = unhx(entry)
        except (TypeError, ValueError) as exc:
            raise MalformedConfig(f"bad private key {entry!r}: {exc}") from None
        if len(raw) != 32:
            raise MalformedConfig("private keys must be 32 bytes")
        private_keys.append(raw)

    rpc_url = provider_obj["rpcUrl"]
    if not isinstance(rpc_url, str) or not rpc_url:
        raise MalformedConfig("rpcUrl must be a non-empty string")
    min_index = _uint(provider_obj, "min")
    max_index = _uint(provider_obj, "max")
    if not 0 <= min_index <= max_index < len(private_keys):
        raise InvalidRange(
            f"need 0 <= min <= max < {len(private_keys)}, "
            f"got min={min_index} max={max_index}")
    provider = KeyProvider(tuple(private_keys), rpc_url, min_index, max_index)

    network_id = _uint(obj, "networkId", minimum=1)
    block_gas_limit = _uint(obj, "blockGasLimit", minimum=1)
    gas_price = _uint(obj, "gasPrice")
    gst = _uint(obj, "gst")
    delta = _uint(obj, "delta", minimum=1)
    pre_gst_max_delay = _uint(obj, "preGstMaxDelay")
    loss = obj["preGstLossProb"]
    if isinstance(loss, bool) or not isinstance(loss, (int, float)):
        raise MalformedConfig("preGstLossProb must be a number")
    if not 0.0 <= float(loss) <= 1.0:
        raise InvalidRange("preGstLossProb must be in [0, 1]")
    seed = _uint(obj, "seed")
    if seed >= 1 << 64:
        raise InvalidRange("seed must fit in 64 bits")
    base_round_timeout = _uint(obj, "baseRoundTimeout", minimum=1)

    raw_validators = obj["validators"]
    if not isinstance(raw_validators, list) or not raw_validators:
        raise MalformedConfig("validators must be a non-empty list")
    by_address = {KeyPair.from_seed(k).address: k for k in private_keys}
    seeds = []
    for entry in raw_validators:
        try:
            raw = unhx(entry)
        except (TypeError, ValueError) as exc:
            raise MalformedConfig(f"bad validator {entry!r}: {exc}") from None
        if len(raw) == 32:
            seeds.append(raw)
        elif len(raw) == 20:
            seed_for = by_address.get(Address(raw))
            if seed_for is None:
                raise MalformedConfig(
                    f"validator address {entry} has no key in keyProvider")
            seeds.append(seed_for)
        else:
            raise MalformedConfig("validator entries must be 32-byte seeds "
                                  "or 20-byte addresses")
    addresses = [KeyPair.from_seed(s).address for s in seeds]
    if len(set(addresses)) != len(addresses):
        raise MalformedConfig("validator addresses must be distinct")

    cfg = GenesisConfig(
        network_id=network_id,
        validators=tuple(seeds),
        block_gas_limit=block_gas_limit,
        gas_price=gas_price,
        gst=gst,
        delta=delta,
        pre_gst_max_delay=pre_gst_max_delay,
        pre_gst_loss_prob=float(loss),
        seed=seed,
        base_round_timeout=base_round_timeout,
        key_provider=provider,
    )
    cfg.network_params  # trigger NetworkParams invariant checks
    return cfg


def emit_genesis(cfg: GenesisConfig) -> bytes:
    obj = {
        "networkId": cfg.network_id,
        "validators": [hx(s) for s in cfg.validators],
        "blockGasLimit": cfg.block_gas_limit,
        "gasPrice": cfg.gas_price,
        "gst": cfg.gst,
        "delta": cfg.delta,
        "preGstMaxDelay": cfg.pre_gst_max_delay,
        "preGstLossProb": cfg.pre_gst_loss_prob,
        "seed": cfg.seed,
        "baseRoundTimeout": cfg.base_round_timeout,
        "keyProvider": {
            "privateKeys": [hx(k) for k in cfg.key_provider.private_keys],
            "rpcUrl": cfg.key_provider.rpc_url,
            "min": cfg.key_provider.min_index,
            "max": cfg.key_provider.max_index,
        },
    }
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")
