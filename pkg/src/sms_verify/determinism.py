# src/sms_verify/determinism.py
import hashlib


def derive_seed(master_seed: int, stage: str, *index: int | str, context: str = "") -> int:
    """
    63-bit seed from sha256(master | context | stage | index...).

    Stable across runs and platforms. `context` is usually a config hash, so
    that two configs sharing a master seed still draw independent streams.
    """
    key = "|".join([str(master_seed), context, stage, *(str(i) for i in index)])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") & (2**63 - 1)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
