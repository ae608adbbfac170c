"""Command-line entry point.

Thin adapters only: every subcommand parses arguments, resolves the shared
configuration, calls one library operation, and reports. Configuration lives
in a flat ``key = value`` file (a TOML-compatible subset); command-line flags
override file values, and every run with an output directory writes a
``run.json`` capturing the resolved config and seed so it can be replayed
bit-for-bit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__, compositor, engine, evalkit, webset
from .core.manifest import load_classes, load_manifest, save_manifest
from .core.rng import derive_seed
from .core.types import AnnotatedImage, PoolState, WebImage, classes_by_name
from .detector.base import DetectorSlot, bootstrap
from .detector.external import ExternalDetector, StdioEndpoint, TcpEndpoint
from .detector.simulated import LatentWorld, SimulatedDetector, SimulatedDetectorParams
from .engine import MetadataSynthesizer, MiningConfig, RenderingSynthesizer
from .errors import ConfigError, LogomineError
from .simworld import SimWorldSpec, generate_world


def parse_flat_config(text: str) -> dict[str, object]:
    """Parse the flat ``key = value`` config dialect.

    Values: quoted strings, integers, floats, true/false. Full-line comments
    start with ``#``. Unquoted bare words are taken as strings.
    """
    out: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {line_no}: expected key = value")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"config line {line_no}: empty key or value")
        if value.startswith('"') and value.endswith('"') and len(value) >= 2:
            out[key] = value[1:-1]
        elif value in ("true", "false"):
            out[key] = value == "true"
        else:
            try:
                out[key] = int(value)
            except ValueError:
                try:
                    out[key] = float(value)
                except ValueError:
                    out[key] = value
    return out


@dataclass
class RunConfig:
    """Resolved configuration for pipeline subcommands."""

    pool: str | None = None
    classes: str | None = None
    icons: str | None = None
    backgrounds: str | None = None
    eval_manifest: str | None = None
    latents: str | None = None
    out: str | None = None
    seed: int = 0
    threshold: float = 0.9
    per_class_quota: int = 500
    max_iterations: int = 8
    stop_epsilon: float = 0.0
    bootstrap_per_class: int = 1000
    mode: str = "co"
    deployment: str | None = None
    render_synth: bool = False
    min_dim: int = 100
    slot_a_name: str = "region-slot"
    slot_b_name: str = "grid-slot"
    slot_a_endpoint: str | None = None  # "tcp:host:port" or "stdio:cmd arg..."
    slot_b_endpoint: str | None = None
    wire_timeout: float = 10.0
    wire_retries: int = 2
    slot_a_false_fire: float = 0.06
    slot_b_false_fire: float = 0.05
    slot_a_score_spread: float = 0.12
    slot_b_score_spread: float = 0.10
    clean_gain: float = 0.025
    noise_penalty: float = 0.01
    synth_gain: float = 0.0016
    synth_ceiling: float = 0.88
    entrenchment: float = 1.5

    _FIELD_ALIASES = {"eval": "eval_manifest"}

    @classmethod
    def from_sources(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        values: dict[str, object] = {}
        if config_path:
            path = Path(config_path)
            if not path.exists():
                raise ConfigError(f"config file not found: {config_path}")
            values.update(parse_flat_config(path.read_text(encoding="utf-8")))
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            key = cls._FIELD_ALIASES.get(key, key)
            if key in known:
                kwargs[key] = value
        return cls(**kwargs)

    def validate_paths(self, required: tuple[str, ...]) -> None:
        problems = []
        for name in required:
            value = getattr(self, name)
            if value is None:
                problems.append(f"missing required setting: {name}")
            elif name != "out" and not Path(value).exists():
                problems.append(f"{name} path does not exist: {value}")
        if not 0.0 < self.threshold <= 1.0:
            problems.append(f"threshold must be in (0,1], got {self.threshold}")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_json(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if not f.name.startswith("_")
        }


def _write_run_log(config: RunConfig, command: str) -> None:
    if not config.out:
        return
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "seed": config.seed, "config": config.to_json()}
    with open(out / "run.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_endpoint(spec: str):
    kind, _, rest = spec.partition(":")
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        return TcpEndpoint(host=host, port=int(port))
    if kind == "stdio":
        return StdioEndpoint(argv=tuple(rest.split()))
    raise ConfigError(f"endpoint must be tcp:host:port or stdio:cmd..., got {spec!r}")


def _build_slot(config: RunConfig, which: str, classes, world) -> DetectorSlot:
    name = getattr(config, f"slot_{which}_name")
    endpoint = getattr(config, f"slot_{which}_endpoint")
    if endpoint:
        impl = ExternalDetector(
            classes,
            _parse_endpoint(endpoint),
            timeout=config.wire_timeout,
            retries=config.wire_retries,
            spool_dir=str(Path(config.out) / "spool") if config.out else None,
        )
        return DetectorSlot(name=name, backend="external", impl=impl)
    params = SimulatedDetectorParams(
        seed=derive_seed(config.seed, "slot", which),
        false_fire=getattr(config, f"slot_{which}_false_fire"),
        score_spread=getattr(config, f"slot_{which}_score_spread"),
        clean_gain=config.clean_gain,
        noise_penalty=config.noise_penalty,
        synth_gain=config.synth_gain,
        synth_ceiling=config.synth_ceiling,
        entrenchment=config.entrenchment,
    )
    impl = SimulatedDetector(params, classes, world)
    return DetectorSlot(name=name, backend="simulated", impl=impl)


def _load_icons_dir(icons_dir: str, classes) -> dict[int, list]:
    """Icons for each class: files under the dir starting with the class name."""
    root = Path(icons_dir)
    out: dict[int, list] = {}
    for cls in classes:
        paths = sorted(
            p for p in root.iterdir() if p.stem.lower().startswith(cls.name.lower())
        )
        if paths:
            out[cls.id] = [compositor.load_image(str(p), "RGBA") for p in paths]
    return out


def _load_backgrounds_dir(backgrounds_dir: str) -> list:
    root = Path(backgrounds_dir)
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in webset.IMAGE_EXTS)
    if not paths:
        raise ConfigError(f"no images found under {backgrounds_dir}")
    return [compositor.load_image(str(p)) for p in paths]


# -- subcommands -------------------------------------------------------------


def cmd_collect(config: RunConfig, args) -> int:
    config.validate_paths(("classes", "out"))
    classes = load_classes(config.classes)
    if args.replay:
        source = webset.ReplaySource(args.replay)
    elif args.source_dir:
        source = webset.DirectorySource(args.source_dir)
    else:
        raise ConfigError("collect needs --source-dir or --replay")
    tally = webset.CollectTally()
    images = webset.collect(source, classes, tally=tally)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(images, out / "collected.manifest", classes)
    _write_run_log(config, "collect")
    print(
        json.dumps(
            {
                "collected": len(images),
                "items_seen": tally.yielded,
                "skipped_undecodable": tally.skipped_undecodable,
                "manifest": str(out / "collected.manifest"),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_filter(config: RunConfig, args) -> int:
    config.validate_paths(("pool", "classes", "out"))
    classes = load_classes(config.classes)
    records = load_manifest(config.pool, classes)
    images = [r for r in records if isinstance(r, WebImage)]
    kept = webset.filter_noise(images, min_dim=config.min_dim)
    if not args.keep_duplicates:
        kept = webset.dedupe_by_size(kept)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(kept, out / "filtered.manifest", classes)
    _write_run_log(config, "filter")
    print(
        json.dumps(
            {"input": len(images), "kept": len(kept), "min_dim": config.min_dim},
            sort_keys=True,
        )
    )
    return 0


def cmd_stats(config: RunConfig, args) -> int:
    config.validate_paths(("pool", "classes"))
    classes = load_classes(config.classes)
    records = load_manifest(config.pool, classes)
    images = [r if isinstance(r, WebImage) else r.image for r in records]
    stats = webset.class_stats(images)
    payload = stats.to_json()
    if config.latents:
        world = LatentWorld.load(config.latents)
        oracle = lambda image_id: world.latent_of(image_id) > 0
        noise = {}
        for cls in classes:
            if any(im.weak_label == cls.id for im in images):
                rate = webset.estimate_noise_rate(
                    images, cls, oracle, sample_n=args.sample_n, seed=config.seed
                )
                noise[cls.name] = rate
        payload["true_logo_rate"] = noise
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_synth(config: RunConfig, args) -> int:
    config.validate_paths(("classes", "backgrounds", "out"))
    classes = load_classes(config.classes)
    by_name = classes_by_name(classes)
    if args.cls not in by_name:
        raise ConfigError(f"unknown class {args.cls!r}")
    cls = by_name[args.cls]
    icons = None
    if config.icons:
        icons = _load_icons_dir(config.icons, [cls]).get(cls.id)
    backgrounds = _load_backgrounds_dir(config.backgrounds)
    rendered = compositor.synth_batch(
        cls, args.count, backgrounds, seed=config.seed, icons=icons
    )
    out = Path(config.out)
    records = []
    for item in rendered:
        rel = f"images/{item.image.id}.png"
        compositor.save_png(item.image.pixels, out / rel)
        records.append(
            AnnotatedImage(
                image=dataclasses.replace(item.image, pixels=rel), truths=item.truths
            )
        )
    save_manifest(records, out / "synth.manifest", classes)
    _write_run_log(config, "synth")
    print(json.dumps({"generated": len(records), "class": cls.name}, sort_keys=True))
    return 0


def cmd_bootstrap(config: RunConfig, args) -> int:
    config.validate_paths(("classes", "backgrounds", "out"))
    classes = load_classes(config.classes)
    icons_by_class = _load_icons_dir(config.icons, classes) if config.icons else {}
    backgrounds = _load_backgrounds_dir(config.backgrounds)
    out = Path(config.out)
    records = []
    for cls in classes:
        rendered = compositor.synth_batch(
            cls,
            args.count,
            backgrounds,
            seed=derive_seed(config.seed, "bootstrap", cls.id),
            icons=icons_by_class.get(cls.id),
        )
        for item in rendered:
            rel = f"images/{item.image.id}.png"
            compositor.save_png(item.image.pixels, out / rel)
            records.append(
                AnnotatedImage(
                    image=dataclasses.replace(item.image, pixels=rel), truths=item.truths
                )
            )
    save_manifest(records, out / "bootstrap.manifest", classes)
    _write_run_log(config, "bootstrap")
    print(json.dumps({"generated": len(records), "per_class": args.count}, sort_keys=True))
    return 0


def cmd_mine(config: RunConfig, args) -> int:
    config.validate_paths(("pool", "classes", "latents", "out"))
    classes = load_classes(config.classes)
    world = LatentWorld.load(config.latents)
    records = load_manifest(config.pool, classes)
    images = [r for r in records if isinstance(r, WebImage)]
    universe = {im.id: im for im in images}
    slot = _build_slot(config, "a", classes, world)
    synthesizer = MetadataSynthesizer(classes)
    boot = []
    for cls in classes:
        boot.extend(synthesizer(cls, config.bootstrap_per_class, [], "bootstrap"))
    slot = bootstrap(slot, boot)
    pool = PoolState.fresh(universe)
    if args.state and Path(args.state).exists():
        state = json.loads(Path(args.state).read_text(encoding="utf-8"))
        pool = PoolState(
            discovered=set(state["discovered"]),
            unexplored=set(universe) - set(state["discovered"]),
            iteration=int(state["iteration"]),
        )
    new_pool, mined = engine.self_mine(slot, pool, config.threshold, universe)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(mined, out / "mined.manifest", classes)
    with open(out / "pool_state.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {"discovered": sorted(new_pool.discovered), "iteration": new_pool.iteration},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_run_log(config, "mine")
    print(json.dumps({"mined": len(mined), "unexplored": len(new_pool.unexplored)}, sort_keys=True))
    return 0


def cmd_colearn(config: RunConfig, args) -> int:
    config.validate_paths(("pool", "classes", "eval_manifest", "out"))
    classes = load_classes(config.classes)
    records = load_manifest(config.pool, classes)
    images = [r for r in records if isinstance(r, WebImage)]
    eval_images = [
        r for r in load_manifest(config.eval_manifest, classes) if isinstance(r, AnnotatedImage)
    ]
    world = LatentWorld()
    if config.latents:
        world = LatentWorld.load(config.latents)
    elif not (config.slot_a_endpoint and config.slot_b_endpoint):
        raise ConfigError("simulated slots need a latents file (set latents = ...)")
    slot_a = _build_slot(config, "a", classes, world)
    slot_b = _build_slot(config, "b", classes, world)
    if "external" in (slot_a.backend, slot_b.backend) and not config.render_synth:
        raise ConfigError(
            "external slots train from manifests on disk: set render_synth = true "
            "and provide icons/backgrounds so synthetic images exist as files"
        )
    if config.render_synth:
        config.validate_paths(("icons", "backgrounds"))
        synthesizer = RenderingSynthesizer(
            classes,
            _load_icons_dir(config.icons, classes),
            _load_backgrounds_dir(config.backgrounds),
            seed=config.seed,
            out_dir=config.out,
        )
    else:
        synthesizer = MetadataSynthesizer(classes)
    mining = MiningConfig(
        threshold=config.threshold,
        per_class_quota=config.per_class_quota,
        max_iterations=config.max_iterations,
        stop_epsilon=config.stop_epsilon,
        bootstrap_per_class=config.bootstrap_per_class,
        mode=config.mode,
        deployment=config.deployment,
    )
    _write_run_log(config, "colearn")
    result = engine.run(
        mining,
        classes,
        images,
        eval_images,
        slot_a,
        slot_b,
        seed=config.seed,
        synthesizer=synthesizer,
        out_dir=config.out,
    )
    print(
        json.dumps(
            {
                "iterations": result.reports[-1].iteration,
                "final_map": result.final_map,
                "out": config.out,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_evaluate(config: RunConfig, args) -> int:
    config.validate_paths(("classes",))
    classes = load_classes(config.classes)
    for name, value in (("detections", args.detections), ("truths", args.truths)):
        if not value or not Path(value).exists():
            raise ConfigError(f"evaluate needs an existing --{name} file")
    detections = evalkit.load_detections(args.detections, classes)
    records = load_manifest(args.truths, classes)
    truths = {
        r.image.id: list(r.truths) for r in records if isinstance(r, AnnotatedImage)
    }
    result = evalkit.evaluate_detections(
        detections,
        truths,
        iou_thresh=args.iou,
        interpolation=args.interp,
        strict=args.strict,
    )
    payload = result.to_json()
    payload["settings"] = {"iou": args.iou, "interp": args.interp, "strict": args.strict}
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_simulate(config: RunConfig, args) -> int:
    config.validate_paths(("out",))
    spec = SimWorldSpec(
        n_classes=args.n_classes,
        max_count=args.max_count,
        min_count=args.min_count,
        decay=args.decay,
        true_rate=args.true_rate,
        eval_positives=args.eval_positives,
        eval_backgrounds=args.eval_backgrounds,
        seed=config.seed,
    )
    world = generate_world(spec)
    out = Path(config.out)
    world.save(out)
    template = [
        f'pool = "{out / "pool.manifest"}"',
        f'classes = "{out / "classes.tsv"}"',
        f'eval = "{out / "eval.manifest"}"',
        f'latents = "{out / "latents.json"}"',
        f"seed = {config.seed}",
        f"threshold = {config.threshold}",
        f"per_class_quota = {config.per_class_quota}",
        f"max_iterations = {config.max_iterations}",
    ]
    (out / "colearn.config").write_text("\n".join(template) + "\n", encoding="utf-8")
    _write_run_log(config, "simulate")
    print(
        json.dumps(
            {
                "classes": len(world.classes),
                "pool_images": len(world.pool),
                "eval_images": len(world.eval_images),
                "out": str(out),
            },
            sort_keys=True,
        )
    )
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logomine",
        description="Weakly-labelled logo dataset construction and self/co-mining training loop",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="seed overriding the config value")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--classes", help="class registry tsv")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("collect", help="pull a stream source into a weak-labelled manifest")
    common(p)
    p.add_argument("--source-dir", help="directory source with sidecar texts")
    p.add_argument("--replay", help="recorded-stream JSONL to replay")

    p = sub.add_parser("filter", help="size filter + per-class duplicate removal")
    common(p)
    p.add_argument("--pool", help="input manifest")
    p.add_argument("--min-dim", type=int, dest="min_dim", help="minimum width/height (default 100)")
    p.add_argument("--keep-duplicates", action="store_true")

    p = sub.add_parser("stats", help="per-class counts and imbalance")
    common(p)
    p.add_argument("--pool", help="input manifest")
    p.add_argument("--latents", help="latent world json: adds true-logo-rate estimates")
    p.add_argument("--sample-n", type=int, default=1000, dest="sample_n")

    p = sub.add_parser("synth", help="render synthetic images for one class")
    common(p)
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--backgrounds", help="background image directory")
    p.add_argument("--icons", help="icon image directory")

    p = sub.add_parser("bootstrap", help="render the synthetic bootstrap set for all classes")
    common(p)
    p.add_argument("--count", type=int, default=1000, help="images per class")
    p.add_argument("--backgrounds")
    p.add_argument("--icons")

    p = sub.add_parser("mine", help="one self-mining sweep with a simulated slot")
    common(p)
    p.add_argument("--pool")
    p.add_argument("--latents")
    p.add_argument("--threshold", type=float)
    p.add_argument("--state", help="pool state json from a previous sweep")

    p = sub.add_parser("colearn", help="full iterative co-mining run")
    common(p)
    p.add_argument("--pool")
    p.add_argument("--icons")
    p.add_argument("--eval", dest="eval_manifest")
    p.add_argument("--latents")
    p.add_argument("--mode", choices=["co", "self"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--per-class-quota", type=int, dest="per_class_quota")

    p = sub.add_parser("evaluate", help="AP/mAP of a detections file against truths")
    common(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--truths", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--interp", choices=["all", "11pt"], default="all")
    p.add_argument("--strict", action="store_true", help="require IoU strictly above threshold")

    p = sub.add_parser("simulate", help="generate a synthetic world for desk-scale runs")
    common(p)
    p.add_argument("--n-classes", type=int, default=12, dest="n_classes")
    p.add_argument("--max-count", type=int, default=1500, dest="max_count")
    p.add_argument("--min-count", type=int, default=6, dest="min_count")
    p.add_argument("--decay", type=float, default=0.6)
    p.add_argument("--true-rate", type=float, default=0.25, dest="true_rate")
    p.add_argument("--eval-positives", type=int, default=20, dest="eval_positives")
    p.add_argument("--eval-backgrounds", type=int, default=120, dest="eval_backgrounds")

    return parser


_HANDLERS = {
    "collect": cmd_collect,
    "filter": cmd_filter,
    "stats": cmd_stats,
    "synth": cmd_synth,
    "bootstrap": cmd_bootstrap,
    "mine": cmd_mine,
    "colearn": cmd_colearn,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
}

_CONFIG_FLAGS = (
    "classes",
    "out",
    "pool",
    "latents",
    "icons",
    "backgrounds",
    "eval_manifest",
    "mode",
    "threshold",
    "max_iterations",
    "per_class_quota",
    "min_dim",
    "seed",
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        name: getattr(args, name) for name in _CONFIG_FLAGS if hasattr(args, name)
    }
    try:
        config = RunConfig.from_sources(args.config, overrides)
        return _HANDLERS[args.command](config, args)
    except LogomineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
