"""Command-line front end.

Exit status: 0 success, 1 usage error, 2 data or I/O error, 3 verification
failure. Every output file is written through a temporary file and renamed,
so a failed command leaves no partial artifacts.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np

from labelembed import dataio, jl_embed, pipeline, regress
from labelembed.errors import (
    ArtifactError, ConditionViolatedError, DataError, JLPViolationError,
    LabelEmbedError, LabelRangeError,
)

logger = logging.getLogger("labelembed")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

CAMPAIGNS = ("theorem1", "massart", "theorem2", "lemmas")


class UsageError(Exception):
    """Inconsistent or missing options."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


# -- parser ------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON file of option defaults; flags win")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="write metrics as JSON to this path")
    p.add_argument("-v", "--verbose", action="store_true")


def _embedding_opts(p):
    p.add_argument("--embed-dim", type=int, help="embedding dimension n")
    p.add_argument("--epsilon", type=float,
                   help="choose n from the JL rule instead of --embed-dim")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--c0", type=float, default=4.0)
    p.add_argument("--kind", choices=("gaussian", "rademacher"), default="rademacher")


def _train_opts(p):
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--bias", action="store_true", help="fit an unpenalised intercept")
    p.add_argument("--normalize", action="store_true",
                   help="scale features to unit column norm while training")


def _multilabel_opts(p):
    p.add_argument("--multilabel", action="store_true")
    p.add_argument("--max-labels", type=int, help="K, the label-set size limit")


def build_parser():
    parser = _Parser(prog="labelembed",
                     description="Extreme classification by label embedding "
                                 "and regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.commands = sub.choices

    p = sub.add_parser("train", help="embed labels and fit the regressor")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--matrix", required=True,
                   help="output embedding matrix file (input with --reuse-matrix)")
    p.add_argument("--reuse-matrix", action="store_true",
                   help="load --matrix instead of sampling a new one")
    p.add_argument("--classes", type=int, help="number of classes C")
    _embedding_opts(p)
    _train_opts(p)
    _multilabel_opts(p)

    p = sub.add_parser("predict", help="write predicted labels, one row per line")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    _multilabel_opts(p)

    p = sub.add_parser("eval", help="accuracy of a trained model on labelled data")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--matrix", required=True)
    _multilabel_opts(p)

    p = sub.add_parser("verify", help="run the excess-risk verification campaigns")
    _common(p)
    p.add_argument("--campaign", choices=CAMPAIGNS + ("all",), default="theorem1")
    p.add_argument("--trials", type=int)
    p.add_argument("--classes", type=int, help="C (max C for theorem2)")
    p.add_argument("--embed-dim", type=int, help="n (max n for theorem2)")
    p.add_argument("--points", type=int, help="support size M")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-labels", type=int, help="max K for theorem2")
    p.add_argument("--draws", type=int, default=10000, help="draws per lemma")
    p.add_argument("--kind", choices=("gaussian", "rademacher"), default="rademacher")
    p.add_argument("--source", choices=("iid", "gram", "iid-then-gram"),
                   default="iid-then-gram",
                   help="how embedding matrices are obtained")
    p.add_argument("--out", help="directory for JSON, CSV and PNG reports")

    p = sub.add_parser("bench", help="wall time against worker count")
    _common(p)
    p.add_argument("--data", help="training file (default: synthetic blobs)")
    p.add_argument("--test-data")
    p.add_argument("--classes", type=int, default=256)
    p.add_argument("--features", type=int, default=2000)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--worker-counts", default="1,2,4,8",
                   help="comma-separated worker counts")
    p.add_argument("--baseline", action="store_true",
                   help="also time the one-vs-all baseline")
    p.add_argument("--out", help="CSV output; a PNG is written next to it")
    _embedding_opts(p)
    _train_opts(p)

    p = sub.add_parser("synth", help="write a synthetic blob dataset")
    _common(p)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--features", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--density", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out")
    p.add_argument("--test-fraction", type=float, default=0.0)

    p = sub.add_parser("stats", help="print N, D, C and density of a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    _multilabel_opts(p)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            parser.error("cannot read config %s: %s" % (args.config, exc))
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - set(vars(args)) - {"command"})
        if unknown:
            parser.error("unknown config keys for %s: %s"
                         % (args.command, ", ".join(unknown)))
        cfg.pop("command", None)
        # defaults from the file, then the command line on top
        parser.commands[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# -- helpers -----------------------------------------------------------------

def _need_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError("input file not found: %s" % path)


def _need_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError("output directory does not exist: %s" % parent)


def _write_json(path, payload):
    if path:
        dataio.atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True)
                                 + "\n")


def _train_config(args, workers=None):
    return regress.TrainConfig(
        lambda1=args.l1, lambda2=args.l2, max_iters=args.iters,
        tolerance=args.tol, workers=workers or args.workers,
        fit_bias=args.bias, normalize=args.normalize)


def _embed_dim(args, num_classes):
    if args.embed_dim is not None and args.epsilon is not None:
        raise UsageError("give --embed-dim or --epsilon, not both")
    if args.embed_dim is not None:
        if args.embed_dim < 1:
            raise UsageError("--embed-dim must be positive")
        return args.embed_dim
    if args.epsilon is None:
        raise UsageError("one of --embed-dim or --epsilon is required")
    return jl_embed.suggest_dim(num_classes, args.epsilon, args.delta, args.c0)


def _load(args, path, **kw):
    if getattr(args, "multilabel", False):
        kw["max_labels"] = args.max_labels
    return dataio.load_svmlight(path, multilabel=getattr(args, "multilabel", False),
                                workers=args.workers, **kw)


def _load_artifacts(args):
    _need_file(args.model)
    _need_file(args.matrix)
    matrix = jl_embed.load_matrix(args.matrix)
    model = regress.load_model(args.model)
    if model.output_dim != matrix.embed_dim:
        raise ArtifactError(
            "model output dimension %d does not match matrix dimension %d"
            % (model.output_dim, matrix.embed_dim))
    return matrix, model


def _restrict_features(data, num_features):
    """Drop feature columns the model never saw; their weight is zero."""
    extra = data.X.shape[1] - num_features
    if extra <= 0:
        return data.X
    X = data.X.tocsc()[:, :num_features].tocsr()
    dropped = data.X.nnz - X.nnz
    if dropped:
        logger.warning("ignoring %d nonzeros in %d feature columns unseen in "
                       "training", dropped, extra)
    X.sort_indices()
    return X


def _max_labels(args, data=None):
    if args.max_labels is not None:
        return args.max_labels
    if data is not None:
        return data.max_labels
    raise UsageError("--max-labels is required with --multilabel")


# -- commands ----------------------------------------------------------------

def cmd_train(args):
    _need_file(args.data)
    _need_parent(args.model)
    if args.reuse_matrix:
        _need_file(args.matrix)
    else:
        _need_parent(args.matrix)
        if args.embed_dim is None and args.epsilon is None:
            raise UsageError("one of --embed-dim or --epsilon is required")
    start = time.perf_counter()
    data = _load(args, args.data, num_classes=args.classes)
    if args.reuse_matrix:
        matrix = jl_embed.load_matrix(args.matrix)
        if matrix.num_classes < data.num_classes:
            raise ArtifactError(
                "matrix embeds %d classes but the data has %d"
                % (matrix.num_classes, data.num_classes))
    else:
        n = _embed_dim(args, data.num_classes)
        matrix = jl_embed.sample_matrix(data.num_classes, n, args.kind, args.seed)
    config = _train_config(args)
    if args.multilabel:
        targets = jl_embed.embed_multilabel_dataset(data, matrix)
    else:
        targets = jl_embed.embed_dataset(data, matrix)
    model = regress.train(targets, config)
    risk = regress.surrogate_risk(model, targets)
    wall = time.perf_counter() - start

    created = []
    try:
        if not args.reuse_matrix:
            jl_embed.save_matrix(matrix, args.matrix)
            created.append(args.matrix)
        regress.save_model(model, args.model)
    except BaseException:
        for path in created:
            os.unlink(path)
        raise
    metrics = {"rows": data.num_rows, "features": data.num_features,
               "classes": matrix.num_classes, "embed_dim": matrix.embed_dim,
               "surrogate_risk": risk, "iterations": model.iterations_run,
               "wall_seconds": wall}
    print("N=%d D=%d C=%d n=%d surrogate_risk=%.6g iterations=%d wall=%.3fs"
          % (data.num_rows, data.num_features, matrix.num_classes,
             matrix.embed_dim, risk, model.iterations_run, wall))
    _write_json(args.json, metrics)
    return EXIT_OK


def _predict(args, matrix, model, data):
    X = _restrict_features(data, model.num_features)
    if args.multilabel:
        return pipeline.predict_labelsets(model, matrix, X, _max_labels(args, data))
    return pipeline.predict_labels(model, matrix, X, args.workers)


def cmd_predict(args):
    _need_file(args.data)
    _need_parent(args.out)
    matrix, model = _load_artifacts(args)
    data = _load(args, args.data)
    preds, dist = _predict(args, matrix, model, data)
    if args.multilabel:
        lines = [",".join(str(c + 1) for c in s) for s in preds]
    else:
        lines = ["%d\t%r" % (int(c) + 1, float(d)) for c, d in zip(preds, dist)]
    dataio.atomic_write_text(args.out, "".join(line + "\n" for line in lines))
    print("wrote %d predictions to %s" % (len(lines), args.out))
    return EXIT_OK


def cmd_eval(args):
    _need_file(args.data)
    if args.json:
        _need_parent(args.json)
    matrix, model = _load_artifacts(args)
    data = _load(args, args.data)
    if data.num_rows == 0:
        raise DataError("evaluation set is empty")
    preds, dist = _predict(args, matrix, model, data)
    metrics = {"rows": data.num_rows, "mean_decode_distance_sq": float(np.mean(dist))}
    if args.multilabel:
        from labelembed.risklab.risk import hamming_loss

        C = matrix.num_classes
        truth = data.label_matrix()
        if truth.shape[1] > C:
            raise LabelRangeError("test labels exceed the %d-class model" % C)
        losses, exact = [], 0
        for i, s in enumerate(preds):
            y = np.zeros(C, dtype=np.int8)
            y[list(s)] = 1
            t = np.zeros(C, dtype=np.int8)
            t[:truth.shape[1]] = truth[i]
            losses.append(hamming_loss(y, t))
            exact += int(np.array_equal(y, t))
        metrics.update(hamming_loss=float(np.mean(losses)),
                       subset_accuracy=exact / data.num_rows)
        print("hamming_loss=%.6f subset_accuracy=%.6f mean_decode_distance_sq=%.6g"
              % (metrics["hamming_loss"], metrics["subset_accuracy"],
                 metrics["mean_decode_distance_sq"]))
    else:
        acc = dataio.evaluate_accuracy(preds, data.labels, matrix.num_classes)
        metrics["accuracy"] = acc
        print("accuracy=%.6f mean_decode_distance_sq=%.6g"
              % (acc, metrics["mean_decode_distance_sq"]))
    _write_json(args.json, metrics)
    return EXIT_OK


def _campaign_kwargs(args, name):
    kw = {"seed": args.seed, "kind": args.kind, "source": args.source}
    if name != "lemmas":
        kw["workers"] = args.workers
    if args.trials is not None and name != "lemmas":
        kw["trials"] = args.trials
    if args.epsilon is not None:
        kw["epsilon"] = args.epsilon
    if name == "theorem2":
        for opt, key in (("classes", "max_classes"), ("embed_dim", "max_dim"),
                         ("points", "num_points"), ("max_labels", "max_labels")):
            if getattr(args, opt) is not None:
                kw[key] = getattr(args, opt)
    else:
        for opt, key in (("classes", "num_classes"), ("embed_dim", "embed_dim")):
            if getattr(args, opt) is not None:
                kw[key] = getattr(args, opt)
        if args.points is not None and name != "lemmas":
            kw["num_points"] = args.points
    if name == "lemmas":
        kw["draws"] = args.draws
    return kw


def cmd_verify(args):
    from labelembed.risklab import campaign as cp

    runners = {"theorem1": cp.theorem1_campaign, "massart": cp.massart_campaign,
               "theorem2": cp.theorem2_campaign, "lemmas": cp.lemma_campaign}
    names = CAMPAIGNS if args.campaign == "all" else (args.campaign,)
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be positive")
    if args.epsilon is not None and not 0 < args.epsilon < 1:
        raise UsageError("--epsilon must lie in (0, 1)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    if args.json:
        _need_parent(args.json)
    summaries = {}
    failed = False
    for name in names:
        result = runners[name](**_campaign_kwargs(args, name))
        summary = result.summary()
        summaries[name] = summary
        print("%s: %d trials, %d asserted, %d skipped-jlp, %d violations, "
              "%d lemma violations (%.1fs)"
              % (name, summary["trials"], summary["asserted"],
                 summary["skipped_jlp"], summary["violations"],
                 summary["lemma_violations"], summary["elapsed_seconds"]))
        if result.skipped:
            print("  skip count: %d (matrix failed the JLP check; bound not asserted)"
                  % result.skipped)
        if not result.passed:
            failed = True
            if result.violating_seeds:
                print("  violating seeds: %s"
                      % " ".join(map(str, result.violating_seeds)), file=sys.stderr)
            if result.lemma_violations:
                print("  lemma violations: %s" % json.dumps(result.lemma_report),
                      file=sys.stderr)
        if args.out:
            from labelembed.plotting import plot_campaign

            stem = os.path.join(args.out, name)
            dataio.atomic_write_text(stem + ".json", result.to_json())
            dataio.atomic_write_text(stem + ".csv", result.to_csv())
            plot_campaign(result, stem + ".png")
    _write_json(args.json, summaries)
    return EXIT_VERIFY if failed else EXIT_OK


def _bench_rows(train, test, matrix, args, counts, method):
    rows = []
    for w in counts:
        t0 = time.perf_counter()
        model = pipeline.fit(train, matrix, _train_config(args, workers=w))
        t1 = time.perf_counter()
        labels, _ = pipeline.predict_labels(model, matrix, test.X, workers=w)
        t2 = time.perf_counter()
        acc = dataio.evaluate_accuracy(labels, test.labels, matrix.num_classes)
        rows.append({"method": method, "workers": w, "embed_dim": matrix.embed_dim,
                     "train_seconds": t1 - t0, "decode_seconds": t2 - t1,
                     "queries_per_second": test.num_rows / max(t2 - t1, 1e-12),
                     "accuracy": acc})
        logger.info("%s workers=%d train=%.3fs decode=%.3fs acc=%.4f",
                    method, w, t1 - t0, t2 - t1, acc)
    return rows


def cmd_bench(args):
    try:
        counts = [int(c) for c in args.worker_counts.split(",") if c.strip()]
    except ValueError:
        raise UsageError("--worker-counts must be comma-separated integers")
    if not counts or min(counts) < 1:
        raise UsageError("worker counts must be positive")
    if args.out:
        _need_parent(args.out)
    if args.data:
        _need_file(args.data)
        data = _load(args, args.data)
        if args.test_data:
            _need_file(args.test_data)
            train = data
            test = _load(args, args.test_data, num_features=data.num_features,
                         num_classes=data.num_classes)
        else:
            train, test = dataio.split(data, 0.2, args.seed)
    else:
        data = dataio.synth_blobs(args.classes, args.features, args.per_class,
                                  seed=args.seed)
        train, test = dataio.split(data, 0.2, args.seed)
    if test.num_rows == 0:
        raise DataError("benchmark needs a non-empty test split")
    n = _embed_dim(args, data.num_classes)
    matrix = jl_embed.sample_matrix(data.num_classes, n, args.kind, args.seed)
    rows = _bench_rows(train, test, matrix, args, counts, "embedded")
    if args.baseline:
        basis = jl_embed.standard_basis_matrix(data.num_classes)
        rows += _bench_rows(train, test, basis, args, counts, "one-vs-all")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        from labelembed.plotting import plot_bench

        dataio.atomic_write_text(args.out, buf.getvalue())
        plot_bench([r for r in rows if r["method"] == "embedded"],
                   os.path.splitext(args.out)[0] + ".png")
    else:
        sys.stdout.write(buf.getvalue())
    _write_json(args.json, rows)
    return EXIT_OK


def cmd_synth(args):
    _need_parent(args.out)
    if args.test_fraction and not args.test_out:
        raise UsageError("--test-fraction needs --test-out")
    if args.test_out:
        _need_parent(args.test_out)
    data = dataio.synth_blobs(args.classes, args.features, args.per_class,
                              noise=args.noise, seed=args.seed, density=args.density)
    if args.test_out:
        train, test = dataio.split(data, args.test_fraction, args.seed)
        dataio.atomic_write_text(args.test_out, dataio.write_svmlight(test))
    else:
        train = data
    dataio.atomic_write_text(args.out, dataio.write_svmlight(train))
    print("wrote %d rows to %s" % (train.num_rows, args.out))
    return EXIT_OK


def cmd_stats(args):
    _need_file(args.data)
    data = _load(args, args.data)
    stats = dataio.dataset_stats(data)
    print("N=%d D=%d C=%d density=%.6g" % (stats["rows"], stats["features"],
                                           stats["classes"], stats["density"]))
    _write_json(args.json, stats)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "verify": cmd_verify, "bench": cmd_bench, "synth": cmd_synth,
            "stats": cmd_stats}


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("labelembed: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print("labelembed %s: error: %s" % (args.command, exc), file=sys.stderr)
        return EXIT_USAGE
    except (JLPViolationError, ConditionViolatedError) as exc:
        print("labelembed %s: verification failed: %s" % (args.command, exc),
              file=sys.stderr)
        return EXIT_VERIFY
    except (LabelEmbedError, ValueError, OSError) as exc:
        print("labelembed %s: error: %s" % (args.command, exc), file=sys.stderr)
        return EXIT_DATA
