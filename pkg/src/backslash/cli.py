"""Command line entry point: ``backslash <command> [flags]``.

Exit status is 0 on success, 1 for usage or invalid values, 2 for file,
format or corruption errors and 3 when training diverges. With ``--json``
every result is printed as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import codec, ggd, tensorstore, trainer
from .errors import (
    BackslashError,
    DivergenceError,
    DomainError,
    FormatError,
    RangeError,
    ShapeError,
)
from .tensorstore import ParameterTensor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for format errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonnegative_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


# -- output -----------------------------------------------------------------


def _emit(args, record, text):
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(text)


def _load_flat(path):
    tensors = tensorstore.load_tensors(path)
    return tensors, np.concatenate([t.values for t in tensors])


def _restore(tensors, flat):
    out, off = [], 0
    for t in tensors:
        out.append(ParameterTensor(t.name, t.dims, flat[off : off + t.values.size]))
        off += t.values.size
    return out


def _add_data_flags(p):
    g = p.add_argument_group("desk dataset")
    d = trainer.DESK_TASK
    g.add_argument("--classes", type=_positive_int, default=d["classes"], help="number of classes")
    g.add_argument("--per-class", type=_positive_int, default=d["per_class"], help="points per class")
    g.add_argument("--dim", type=_positive_int, default=d["dim"], help="input dimension")
    g.add_argument("--spread", type=_nonnegative_float, default=d["spread"], help="noise std around centers")
    g.add_argument("--data-seed", type=int, default=None, help="dataset seed; None means the value of --seed")


def _dataset(args):
    seed = args.seed if args.data_seed is None else args.data_seed
    return trainer.gen_blobs(args.classes, args.per_class, args.dim, args.spread, seed)


# -- commands ---------------------------------------------------------------


def cmd_fit(args):
    _, flat = _load_flat(args.tensor)
    fit = ggd.fit_gg(flat)
    _emit(
        args,
        fit.as_dict(),
        f"shape={fit.shape:.6f} scale={fit.scale:.6g} rho_hat={fit.rho_hat:.6f} n={fit.sample_count}",
    )


def cmd_train(args):
    cfg = trainer.TrainConfig(
        lam=args.lam,
        epsilon=args.epsilon,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        fixed_shape=args.fixed_shape,
        include_biases=not args.exclude_biases,
        hidden=tuple(args.hidden),
    )
    data = _dataset(args)
    model, metrics = trainer.train(cfg, data)
    tensorstore.save_tensors(model.to_tensors(), args.out)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(metrics.to_jsonl())
    last = metrics.last
    record = {
        "lambda": cfg.lam,
        "epochs": cfg.epochs,
        "parameters": model.num_parameters,
        "distortion": last.distortion,
        "rate": last.rate,
        "cost": last.cost,
        "shape": last.shape,
        "train_accuracy": last.train_accuracy,
        "test_accuracy": last.test_accuracy,
        "eg_bits": last.eg_bits,
    }
    _emit(
        args,
        record,
        f"lambda={cfg.lam:g} test_acc={last.test_accuracy:.4f} eg_bits={last.eg_bits:.4f} "
        f"shape={last.shape:.4f} D={last.distortion:.6g} J={last.cost:.6g} -> {args.out}",
    )


def cmd_encode(args):
    _, flat = _load_flat(args.tensor)
    blob = codec.encode_tensor(flat, args.n, args.k)
    data = blob.to_bytes()
    with open(args.out, "wb") as fp:
        fp.write(data)
    _emit(
        args,
        {"param_count": blob.param_count, "avg_bits": blob.avg_bits, "bytes": len(data), "n": args.n, "k": args.k},
        f"{blob.param_count} params, {blob.avg_bits:.4f} bits/param, {len(data)} bytes -> {args.out}",
    )


def cmd_decode(args):
    with open(args.blob, "rb") as fp:
        blob = codec.EncodedBlob.from_bytes(fp.read())
    q = codec.decode_tensor(blob)
    values = tensorstore.dequantize(q, blob.quant_exponent)
    tensorstore.save_tensor(ParameterTensor(args.name, (values.size,), values), args.out)
    _emit(args, {"param_count": int(values.size), "n": blob.quant_exponent}, f"{values.size} params -> {args.out}")


def cmd_quantize(args):
    tensors, flat = _load_flat(args.tensor)
    q = tensorstore.dequantize(tensorstore.quantize(flat, args.n), args.n)
    tensorstore.save_tensors(_restore(tensors, q), args.out)
    err = float(np.max(np.abs(q - flat)))
    _emit(args, {"n": args.n, "max_error": err}, f"step 2^-{args.n}, max error {err:.3g} -> {args.out}")


def cmd_prune(args):
    tensors, flat = _load_flat(args.tensor)
    pruned = tensorstore.prune(flat, args.rate)
    tensorstore.save_tensors(_restore(tensors, pruned), args.out)
    zeros = int(np.count_nonzero(pruned == 0))
    _emit(args, {"rate": args.rate, "zeros": zeros, "param_count": int(flat.size)}, f"{zeros}/{flat.size} zero -> {args.out}")


def cmd_evaluate(args):
    if args.rates and args.steps:
        raise UsageError("--rates and --steps are mutually exclusive")
    model = trainer.Model.from_tensors(tensorstore.load_tensors(args.model))
    data = _dataset(args)
    x, y = data.split(args.split)
    if args.rates:
        for r in args.rates:
            acc = trainer.evaluate(trainer.prune_model(model, r), x, y)
            _emit(args, {"rate": r, "accuracy": acc}, f"rate={r:g} accuracy={acc:.4f}")
    elif args.steps:
        for n in args.steps:
            acc = trainer.evaluate(trainer.quantize_model(model, n), x, y)
            _emit(args, {"n": n, "step": 2.0**-n, "accuracy": acc}, f"step=2^-{n} accuracy={acc:.4f}")
    else:
        acc = trainer.evaluate(model, x, y)
        _emit(args, {"split": args.split, "accuracy": acc}, f"{args.split} accuracy={acc:.4f}")


def cmd_rate_report(args):
    _, flat = _load_flat(args.tensor)
    rep = codec.rate_report(flat, args.n, range(args.max_order + 1))
    if args.json:
        print(json.dumps(rep.as_dict(), sort_keys=True))
        return
    print(f"params={rep.param_count} n={rep.quant_exponent} distinct={rep.distinct_values}")
    print(f"FL        {rep.fl_bits:8d} bits")
    for k, bits in rep.eg_bits.items():
        print(f"EG k={k:<3d} {bits:8.4f} bits  {rep.eg_total_bytes[k]:10d} bytes")
    print(f"HM        {rep.huffman_bits:8.4f} bits")
    print(f"entropy   {rep.entropy_bits:8.4f} bits")
    print(f"EG compress {100 * rep.eg_compress:6.2f}%  HM compress {100 * rep.hm_compress:6.2f}%")


# -- parser -----------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="backslash", description="Rate-constrained training and exp-Golomb coding of model parameters.")
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--json", action="store_true", help="print line-delimited JSON records")
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        p.set_defaults(func=func)
        return p

    p = add("fit", cmd_fit, "fit a generalized Gaussian to every value in a tensor file")
    p.add_argument("tensor", help="GGRT file (all records are pooled)")

    p = add("train", cmd_train, "train the desk classifier with the rate constraint")
    d = trainer.DESK_TASK
    p.add_argument("--lambda", dest="lam", type=_nonnegative_float, default=0.0, help="rate multiplier")
    p.add_argument("--epsilon", type=_positive_float, default=d["epsilon"], help="soft clipping offset")
    p.add_argument("--lr", type=_positive_float, default=d["learning_rate"], help="SGD learning rate")
    p.add_argument("--epochs", type=_positive_int, default=d["epochs"], help="training epochs")
    p.add_argument("--batch-size", type=_positive_int, default=d["batch_size"], help="minibatch size")
    p.add_argument("--hidden", type=_ints, default=",".join(map(str, d["hidden"])), help="hidden widths, comma-separated")
    p.add_argument("--fixed-shape", type=_positive_float, default=None, help="use this shape instead of fitting it")
    p.add_argument("--exclude-biases", action="store_true", help="keep biases out of the rate term")
    p.add_argument("--out", required=True, help="model archive to write (GGRT)")
    p.add_argument("--metrics", default=None, help="per-epoch metrics file to write (JSON lines)")
    _add_data_flags(p)

    p = add("encode", cmd_encode, "quantize and exp-Golomb encode all values of a tensor file")
    p.add_argument("tensor", help="GGRT file (records are concatenated)")
    p.add_argument("--n", type=int, default=8, help="quantization step is 2^-n")
    p.add_argument("--k", type=int, default=0, help="exp-Golomb order")
    p.add_argument("--out", required=True, help="blob file to write")

    p = add("decode", cmd_decode, "decode a blob into a dequantized one-dimensional tensor")
    p.add_argument("blob", help="blob file written by encode")
    p.add_argument("--name", default="decoded", help="name of the written tensor")
    p.add_argument("--out", required=True, help="GGRT file to write")

    p = add("quantize", cmd_quantize, "round every value to the grid of step 2^-n")
    p.add_argument("tensor", help="GGRT file")
    p.add_argument("--n", type=int, default=8, help="quantization step is 2^-n")
    p.add_argument("--out", required=True, help="GGRT file to write")

    p = add("prune", cmd_prune, "zero the smallest-magnitude fraction of all values")
    p.add_argument("tensor", help="GGRT file (pruning is global over all records)")
    p.add_argument("--rate", type=float, default=0.5, help="fraction of values to zero")
    p.add_argument("--out", required=True, help="GGRT file to write")

    p = add("evaluate", cmd_evaluate, "accuracy of a model archive on the desk dataset")
    p.add_argument("model", help="model archive written by train")
    p.add_argument("--split", choices=("train", "test"), default="test", help="dataset split")
    p.add_argument("--rates", type=_floats, default=None, help="pruning sweep, e.g. 0,0.1,0.5")
    p.add_argument("--steps", type=_ints, default=None, help="quantization sweep of exponents n, e.g. 4,6,8")
    _add_data_flags(p)

    p = add("rate-report", cmd_rate_report, "bits per parameter under FL, exp-Golomb and Huffman coding")
    p.add_argument("tensor", help="GGRT file (records are concatenated)")
    p.add_argument("--n", type=int, default=8, help="quantization step is 2^-n")
    p.add_argument("--max-order", type=int, default=5, help="largest exp-Golomb order in the sweep")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DivergenceError as exc:
        print(f"backslash: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, OSError) as exc:
        print(f"backslash: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (UsageError, DomainError, RangeError, ShapeError, BackslashError) as exc:
        print(f"backslash: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
