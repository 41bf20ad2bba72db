import hashlib
import json
import logging

logger = logging.getLogger(__name__)

# Primitive streams; SRPT and FIFO runs of one replication share both.
ARRIVAL_STREAM = "arrivals"
SIZE_STREAM = "sizes"
# Limit-process draws of an experiment; independent of every replication.
RBM_STREAM = "rbm"


def _canonical(parts) -> bytes:
    return json.dumps(list(parts), sort_keys=True, separators=(",", ":")).encode()


def derive_seed(*parts) -> int:
    """64-bit seed from the SHA-256 digest of the canonical JSON of parts."""
    digest = hashlib.sha256(_canonical(parts)).digest()
    return int.from_bytes(digest[:8], "big")


def replication_seed(base_seed: int, r: float, replication_index: int, stream_tag: str = "replication") -> int:
    return derive_seed(int(base_seed), float(r), int(replication_index), stream_tag)


def config_hash(payload: dict) -> str:
    """SHA-256 hex digest of a JSON-serializable config, key order independent."""
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
