import sys
from pathlib import Path

import pytest

from solsem import Executor, World, parse

REPO = Path(__file__).resolve().parent.parent
CONTRACTS = REPO / "contracts"
SCENARIOS = REPO / "scenarios"

sys.path.insert(0, str(Path(__file__).resolve().parent))

FIXTURE_CONTRACTS = sorted(p.name for p in CONTRACTS.glob("*.sol"))
FIXTURE_SCENARIOS = sorted(p.name for p in SCENARIOS.glob("*.scn"))


def contract_source(name: str) -> str:
    return (CONTRACTS / name).read_text()


def scenario_source(name: str) -> str:
    return (SCENARIOS / name).read_text()


def make_world(*contract_files: str, options=None) -> World:
    world = World(options=options)
    for name in contract_files:
        world.register(parse(contract_source(name), filename=name))
    return world


def world_from_source(source: str, options=None) -> World:
    world = World(options=options)
    world.register(parse(source))
    return world


@pytest.fixture
def coin_world():
    return make_world("coin.sol")


@pytest.fixture
def dao_world():
    return make_world("dao.sol")


def deploy(world: World, name: str, args=(), sender: int = 0xD0, value: int = 0):
    return Executor(world).deploy(name, args=args, sender=sender, value=value)
