"""Bundled PIM-DM model and its crash extension."""

from __future__ import annotations

import json
from importlib import resources

from .model import ProtocolModel, merge_extension, model_from_dict

# Routers in these states forward packets onto the LAN.
FORWARDERS = frozenset({"F", "F_Del"})
# Routers in these states expect packets from the LAN.
EXPECTING = frozenset({"NH", "NH_Rtx"})
# A host behind a router in one of these states has joined.
MEMBER_STATES = frozenset({"M", "NH", "NH_Rtx"})


def _doc(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath("data", name).read_text(encoding="utf-8"))


def model_path() -> str:
    return str(resources.files(__package__).joinpath("data", "pim-dm.json"))


def crash_extension() -> dict:
    return _doc("crash.json")


def load_pim_dm(crash: bool = False) -> ProtocolModel:
    doc = _doc("pim-dm.json")
    if crash:
        doc = merge_extension(doc, crash_extension())
    return model_from_dict(doc)
