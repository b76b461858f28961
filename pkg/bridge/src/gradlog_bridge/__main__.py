"""Entry point: ``python -m gradlog_bridge --models models.json``."""

import argparse
import json
from pathlib import Path

from .models import build_models
from .server import serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gradlog-bridge")
    parser.add_argument("--models", required=True, help="model configuration json")
    args = parser.parse_args(argv)
    config = json.loads(Path(args.models).read_text())
    serve(build_models(config))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
