import logging
import os
import sys
import tempfile

from main import load_config
from services import experiment_service, file_service

logging.basicConfig(level=logging.WARNING)
logger = logging.getLogger(__name__)

CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs", "theorem_trend.json")


def digests(out_dir: str) -> dict:
    return {name: file_service.sha256_file(os.path.join(out_dir, name)) for name in sorted(os.listdir(out_dir))}


def verify_determinism(config_path: str) -> bool:
    exp = load_config(config_path)
    with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
        print(f"--- Run 1 (1 worker) -> {first}")
        experiment_service.run_experiment(exp, out_dir=first, workers=1)
        print(f"--- Run 2 (4 workers) -> {second}")
        experiment_service.run_experiment(exp, out_dir=second, workers=4)
        a, b = digests(first), digests(second)

    if a.keys() != b.keys():
        print(f"FAILURE: file sets differ: {sorted(set(a) ^ set(b))}")
        return False
    differing = [name for name in a if a[name] != b[name]]
    if differing:
        print(f"FAILURE: {len(differing)} of {len(a)} files differ: {differing}")
        return False
    print(f"SUCCESS: all {len(a)} output files byte-identical")
    return True


if __name__ == "__main__":
    path = sys.argv[1] if len(sys.argv) > 1 else CONFIG
    sys.exit(0 if verify_determinism(path) else 1)
