import hashlib
import json


def hash(to_hash: str) -> str:
    return hashlib.sha1(to_hash.encode("utf-8")).hexdigest()


def hash_file(path) -> str:
    h = hashlib.sha1()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Serialization used for hashing: sorted keys, no insignificant whitespace"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
