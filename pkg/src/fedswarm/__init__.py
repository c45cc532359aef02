"""fedswarm: bandwidth-budgeted federated distillation and conformal scoring.

A desk-scale simulator for a swarm of nodes that train a shared next-token
table by exchanging quantized probe logits, and answer queries through
federated score aggregation with split-conformal calibration. Every uplink
is metered by an exact bit ledger, and every closed-form error bound the
protocols admit is available as a calculator so measured quantities can be
checked against their envelopes.
"""

__version__ = "0.1.0"

from fedswarm import bounds, fcrag, fpld, ngram, quant, transport  # noqa: F401
