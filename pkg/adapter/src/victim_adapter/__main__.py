"""CLI: victim-adapter --model module:attr [--weights path] [--logits] [--tcp PORT]"""

from __future__ import annotations

import argparse

from .adapter import AdapterConfig, serve


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="victim-adapter",
        description="Serve a wrapped graph classifier over the victim wire protocol")
    parser.add_argument("--model", required=True,
                        help="loader spec 'module.path:attribute'")
    parser.add_argument("--weights", default=None, help="passed to the loader")
    parser.add_argument("--logits", action="store_true",
                        help="treat model outputs as logits (softmax before replying)")
    parser.add_argument("--tcp", type=int, default=None,
                        help="listen on this TCP port instead of stdio")
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)
    serve(AdapterConfig(
        loader=args.model,
        weights_path=args.weights,
        interpretation="logits" if args.logits else "probabilities",
        tcp_port=args.tcp,
        host=args.host,
    ))


if __name__ == "__main__":
    main()
