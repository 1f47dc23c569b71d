from __future__ import annotations

import json
from pathlib import Path

import pytest

CORPUS = Path(__file__).parent / "corpus"
GOLDENS = Path(__file__).parent / "goldens"

SYNTHETIC = sorted((CORPUS / "synthetic").glob("*.lila"))


@pytest.fixture
def corpus():
    return CORPUS


@pytest.fixture
def goldens():
    return GOLDENS


def read_corpus(name: str) -> str:
    return (CORPUS / name).read_text()


@pytest.fixture
def soccer_source():
    return read_corpus("soccer_events.lila")


@pytest.fixture
def soccer_extended_source():
    return read_corpus("soccer_extended.lila")


def write_soccer_fixtures(base: Path) -> None:
    """Input files for the soccer scenario: one goal, one ball reception."""
    base.mkdir(parents=True, exist_ok=True)
    (base / "gameEvents.json").write_text(
        json.dumps(
            [
                {"period": 1, "time": 10, "eventCode": "Goal", "pId": 7},
                {"period": 1, "time": 20, "eventCode": "BallReception", "pId": 9},
            ]
        )
    )
    (base / "playerInfo.json").write_text(
        json.dumps(
            [
                {"pId": 7, "firstN": "A", "lastN": "B"},
                {"pId": 9, "firstN": "C", "lastN": "D"},
            ]
        )
    )
