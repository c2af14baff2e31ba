import pytest

from ledgersim.config import GenesisConfig, KeyProvider
from ledgersim.crypto import KeyPair, Registry

SEEDS = tuple(bytes([i]) * 32 for i in range(1, 9))


@pytest.fixture(scope="session")
def keys():
    return [KeyPair.from_seed(s) for s in SEEDS]


@pytest.fixture()
def registry(keys):
    reg = Registry()
    for key in keys:
        reg.register(key)
    return reg


def make_genesis(seed=42, *, n_validators=4, gst=100, delta=5,
                 pre_gst_max_delay=50, pre_gst_loss_prob=0.1,
                 base_round_timeout=30, block_gas_limit=4_500_000,
                 gas_price=0, network_id=1337):
    provider = KeyProvider(SEEDS, "http://localhost:8545", 0, len(SEEDS) - 1)
    return GenesisConfig(
        network_id=network_id,
        validators=SEEDS[:n_validators],
        block_gas_limit=block_gas_limit,
        gas_price=gas_price,
        gst=gst,
        delta=delta,
        pre_gst_max_delay=pre_gst_max_delay,
        pre_gst_loss_prob=pre_gst_loss_prob,
        seed=seed,
        base_round_timeout=base_round_timeout,
        key_provider=provider,
    )


@pytest.fixture()
def genesis_cfg():
    return make_genesis()
