"""Unit tests for the bus and the bit ledger."""

import numpy as np
import pytest

from fedswarm import quant
from fedswarm.transport import BitLedger, Bus, ProtocolError, Receipt


def _payload(n, bits=8):
    c = quant.QuantizerConfig(bits_per_coord=bits, clip=10.0)
    return quant.quantize(np.zeros(n), c, seed=0)


def test_training_identity_arithmetic():
    # K=4 nodes, T=5 rounds, m=2048 probes, V=16 coords at 8 bits/coord.
    K, T, m, V, bits = 4, 5, 2048, 16, 8
    bus = Bus(K)
    for t in range(T):
        for i in range(K):
            bus.uplink(i, "training", _payload(m * V, bits), key=t)
    assert bus.ledger.training_uplink_bits == K * T * m * V * bits


def test_per_query_inference_bits():
    bus = Bus(3)
    for q in range(7):
        for i in range(3):
            bus.uplink(i, "inference", _payload(4, bits=6), key=q)
    assert bus.ledger.inference_uplink_bits == 7 * 3 * 4 * 6
    assert bus.ledger.node_bits("inference", 0) == 7 * 4 * 6


def test_empty_payload_counts_header_only():
    bus = Bus(1)
    r = bus.uplink(0, "calibration", _payload(0), key="empty")
    assert isinstance(r, Receipt)
    assert r.payload_bits == 0
    assert r.header_bits > 0
    assert bus.ledger.calibration_uplink_bits == 0
    assert bus.ledger.header_bits > 0


def test_broadcast_leaves_ledger_unchanged():
    bus = Bus(2)
    bus.uplink(0, "training", _payload(8), key=0)
    before = bus.ledger.snapshot()
    bus.broadcast({"round": 0})
    assert bus.ledger.snapshot() == before
    assert all(len(box) == 1 for box in bus.node_mailbox.values())


def test_fifo_per_sender():
    bus = Bus(2)
    for k in range(5):
        bus.uplink(1, "training", _payload(1), key=k)
    msgs = bus.drain_hub(1)
    assert [key for _, key, _ in msgs] == list(range(5))
    assert bus.drain_hub(1) == []


def test_ledger_monotone_and_validated():
    led = BitLedger()
    led.record("training", 0, 0, 10, 2)
    led.record("training", 0, 1, 5, 2)
    assert led.training_uplink_bits == 15
    with pytest.raises(ValueError):
        led.record("bogus", 0, 0, 1, 1)
    with pytest.raises(ValueError):
        led.record("training", 0, 0, -1, 0)


def test_unknown_sender_rejected():
    bus = Bus(2)
    with pytest.raises(ValueError):
        bus.uplink(5, "training", _payload(1))


def test_header_excluded_from_payload_counters():
    bus = Bus(1)
    p = _payload(3, bits=5)
    bus.uplink(0, "training", p)
    assert bus.ledger.training_uplink_bits == 15
    assert bus.ledger.header_bits == p.header_bits
    assert bus.ledger.header_bits >= 112
