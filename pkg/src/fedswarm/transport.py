"""In-process message bus with an exact uplink bit ledger.

Delivery is synchronous, lossless, and FIFO per sender; there is no failure
model. Only uplink payload bits are charged against the budget counters.
Downlink broadcasts are free by convention, and fixed headers (plus byte
alignment padding) are tallied in a separate overhead counter so the payload
identities stay exact.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Hashable

__all__ = ["CHANNELS", "ProtocolError", "Receipt", "BitLedger", "Bus"]

CHANNELS = ("training", "inference", "calibration")


class ProtocolError(RuntimeError):
    """A node violated the synchronous protocol (e.g. a missing report)."""


@dataclass(frozen=True)
class Receipt:
    """Returned by uplink: what was charged for one message."""

    sender: int
    channel: str
    key: Hashable
    payload_bits: int
    header_bits: int


class BitLedger:
    """Monotone uplink bit counters, split by channel and overhead.

    Payload counters never include header bits. Per-message granularity is
    kept per (node, key), where the key names the round (training), the query
    (inference), or the summary tag (calibration).
    """

    def __init__(self):
        self._payload = {ch: defaultdict(int) for ch in CHANNELS}
        self._totals = dict.fromkeys(CHANNELS, 0)
        self.header_bits = 0
        self.messages = 0

    def record(self, channel: str, sender: int, key: Hashable,
               payload_bits: int, header_bits: int) -> None:
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}")
        if payload_bits < 0 or header_bits < 0:
            raise ValueError("bit counts must be nonnegative")
        self._payload[channel][(sender, key)] += payload_bits
        self._totals[channel] += payload_bits
        self.header_bits += header_bits
        self.messages += 1

    def channel_bits(self, channel: str) -> int:
        return self._totals[channel]

    @property
    def training_uplink_bits(self) -> int:
        return self._totals["training"]

    @property
    def inference_uplink_bits(self) -> int:
        return self._totals["inference"]

    @property
    def calibration_uplink_bits(self) -> int:
        return self._totals["calibration"]

    def node_bits(self, channel: str, sender: int) -> int:
        return sum(v for (s, _), v in self._payload[channel].items() if s == sender)

    def per_message(self, channel: str) -> dict:
        return dict(self._payload[channel])

    def snapshot(self) -> dict:
        """JSON-ready totals; per-message detail is intentionally collapsed."""
        return {
            "training_payload_bits": self._totals["training"],
            "inference_payload_bits": self._totals["inference"],
            "calibration_payload_bits": self._totals["calibration"],
            "header_bits": self.header_bits,
            "messages": self.messages,
        }


class Bus:
    """Hub-and-spokes bus: uplinks land in per-sender FIFO hub mailboxes.

    Any object exposing ``payload_bits`` and ``header_bits`` can be uplinked.
    The ledger update and the mailbox append happen together, so counters are
    consistent with delivered messages at every point in time.
    """

    def __init__(self, num_nodes: int, ledger: BitLedger | None = None):
        if num_nodes < 1:
            raise ValueError("need at least one node")
        self.num_nodes = num_nodes
        self.ledger = ledger if ledger is not None else BitLedger()
        self.hub_mailbox = {i: [] for i in range(num_nodes)}
        self.node_mailbox = {i: [] for i in range(num_nodes)}

    def uplink(self, sender: int, channel: str, payload: Any, key: Hashable = None) -> Receipt:
        if not (0 <= sender < self.num_nodes):
            raise ValueError(f"unknown sender {sender}")
        pb = int(payload.payload_bits)
        hb = int(payload.header_bits)
        self.ledger.record(channel, sender, key, pb, hb)
        self.hub_mailbox[sender].append((channel, key, payload))
        return Receipt(sender=sender, channel=channel, key=key,
                       payload_bits=pb, header_bits=hb)

    def broadcast(self, message: Any) -> None:
        """Downlink to every node; the ledger is untouched."""
        for box in self.node_mailbox.values():
            box.append(message)

    def drain_hub(self, sender: int) -> list:
        """Pop all of one sender's pending messages in arrival order."""
        msgs = self.hub_mailbox[sender]
        self.hub_mailbox[sender] = []
        return msgs
