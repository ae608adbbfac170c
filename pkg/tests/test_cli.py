import json

import numpy as np
import pytest
from PIL import Image

from logomine import cli
from logomine.core.manifest import load_manifest, save_classes, save_manifest
from logomine.core.types import AnnotatedImage, BoundingBox, LogoClass, WebImage
from logomine.errors import ConfigError

CLASSES = [LogoClass(1, "acme"), LogoClass(2, "bolt")]


def test_flat_config_parser():
    text = """
# run settings
threshold = 0.85
pool = "data/pool.manifest"
mode = self
render_synth = true
max_iterations = 4
"""
    values = cli.parse_flat_config(text)
    assert values == {
        "threshold": 0.85,
        "pool": "data/pool.manifest",
        "mode": "self",
        "render_synth": True,
        "max_iterations": 4,
    }


def test_flat_config_rejects_bad_lines():
    with pytest.raises(ConfigError):
        cli.parse_flat_config("just some words\n")


def test_config_flags_override_file(tmp_path):
    path = tmp_path / "run.config"
    path.write_text('threshold = 0.7\nseed = 5\npool = "a.manifest"\n', encoding="utf-8")
    config = cli.RunConfig.from_sources(str(path), {"threshold": 0.95, "seed": None})
    assert config.threshold == 0.95  # flag wins
    assert config.seed == 5  # file value kept when flag absent
    assert config.pool == "a.manifest"


def test_config_validation_lists_problems(tmp_path):
    config = cli.RunConfig(pool=str(tmp_path / "missing.manifest"), threshold=2.0)
    with pytest.raises(ConfigError) as excinfo:
        config.validate_paths(("pool", "classes"))
    message = str(excinfo.value)
    assert "missing.manifest" in message
    assert "classes" in message
    assert "threshold" in message


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["evaluate", "--no-such-flag"])
    assert excinfo.value.code == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["frobnicate"])
    assert excinfo.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["--version"])
    assert excinfo.value.code == 0
    assert "logomine" in capsys.readouterr().out


def _classes_file(tmp_path):
    path = tmp_path / "classes.tsv"
    save_classes(CLASSES, path)
    return path


def test_evaluate_perfect_fixture_prints_map_one(tmp_path, capsys):
    classes_path = _classes_file(tmp_path)
    truths = [
        AnnotatedImage(
            image=WebImage(id=f"i{k}", width=100, height=100, pixels=f"i{k}.png",
                           weak_label=1, source="external"),
            truths=((1, BoundingBox(10, 10, 60, 60)),),
        )
        for k in range(4)
    ]
    truths_path = tmp_path / "truths.manifest"
    save_manifest(truths, truths_path, CLASSES)
    dets_path = tmp_path / "dets.tsv"
    lines = [f"i{k}\tacme\t1.0\t10,10,60,60" for k in range(4)]
    dets_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    code = cli.main(
        ["evaluate", "--classes", str(classes_path), "--detections", str(dets_path),
         "--truths", str(truths_path)]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["mAP"] == 1.0


def test_evaluate_missing_file_exits_1(tmp_path, capsys):
    classes_path = _classes_file(tmp_path)
    code = cli.main(
        ["evaluate", "--classes", str(classes_path), "--detections", "nope.tsv",
         "--truths", "nope.manifest"]
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_simulate_then_stats(tmp_path, capsys):
    out = tmp_path / "world"
    code = cli.main(
        ["--seed", "4", "simulate", "--out", str(out), "--n-classes", "3",
         "--max-count", "40", "--eval-positives", "4", "--eval-backgrounds", "6"]
    )
    assert code == 0
    capsys.readouterr()
    assert (out / "pool.manifest").exists()
    assert (out / "latents.json").exists()
    code = cli.main(
        ["stats", "--pool", str(out / "pool.manifest"), "--classes", str(out / "classes.tsv"),
         "--latents", str(out / "latents.json")]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["min"] >= 1
    assert payload["imbalance_ratio"] >= 1.0
    assert set(payload["true_logo_rate"]) == {"brand01", "brand02", "brand03"}


def test_collect_and_filter_flow(tmp_path, capsys):
    classes_path = _classes_file(tmp_path)
    source = tmp_path / "stream"
    source.mkdir()
    Image.new("RGB", (150, 150), (9, 9, 9)).save(source / "one.png")
    (source / "one.png.txt").write_text("love my acme gear", encoding="utf-8")
    Image.new("RGB", (40, 40)).save(source / "two.png")
    (source / "two.png.txt").write_text("acme again", encoding="utf-8")
    out = tmp_path / "collected"
    code = cli.main(
        ["collect", "--classes", str(classes_path), "--source-dir", str(source),
         "--out", str(out)]
    )
    assert code == 0
    assert json.loads(capsys.readouterr().out)["collected"] == 2
    filtered = tmp_path / "filtered"
    code = cli.main(
        ["filter", "--classes", str(classes_path), "--pool",
         str(out / "collected.manifest"), "--out", str(filtered)]
    )
    assert code == 0
    assert json.loads(capsys.readouterr().out)["kept"] == 1  # 40px image dropped
    records = load_manifest(filtered / "filtered.manifest", CLASSES)
    assert [r.id for r in records] == ["one::acme"]
    assert (filtered / "run.json").exists()


def test_synth_writes_images_and_manifest(tmp_path, capsys):
    classes_path = _classes_file(tmp_path)
    backgrounds = tmp_path / "bg"
    backgrounds.mkdir()
    Image.fromarray(np.full((80, 80, 3), 20, dtype=np.uint8)).save(backgrounds / "b.png")
    icons = tmp_path / "icons"
    icons.mkdir()
    Image.fromarray(
        np.dstack([np.full((16, 16, 3), 220, dtype=np.uint8),
                   np.full((16, 16, 1), 255, dtype=np.uint8)])
    ).save(icons / "acme.png")
    out = tmp_path / "synthout"
    code = cli.main(
        ["--seed", "2", "synth", "--classes", str(classes_path), "--class", "acme",
         "--count", "5", "--backgrounds", str(backgrounds), "--icons", str(icons),
         "--out", str(out)]
    )
    assert code == 0
    assert json.loads(capsys.readouterr().out)["generated"] == 5
    records = load_manifest(out / "synth.manifest", CLASSES)
    assert len(records) == 5
    for record in records:
        assert (out / record.image.pixels).exists()
        img = Image.open(out / record.image.pixels)
        assert img.size == (80, 80)


def test_mine_subcommand(tmp_path, capsys):
    out = tmp_path / "world"
    cli.main(["--seed", "8", "simulate", "--out", str(out), "--n-classes", "3",
              "--max-count", "60", "--eval-positives", "4", "--eval-backgrounds", "4"])
    capsys.readouterr()
    mined_dir = tmp_path / "mined"
    code = cli.main(
        ["--seed", "8", "mine", "--classes", str(out / "classes.tsv"),
         "--pool", str(out / "pool.manifest"), "--latents", str(out / "latents.json"),
         "--threshold", "0.8", "--out", str(mined_dir)]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["mined"] >= 0
    assert (mined_dir / "pool_state.json").exists()


def test_colearn_cli_end_to_end(tmp_path, capsys):
    world_dir = tmp_path / "world"
    cli.main(["--seed", "6", "simulate", "--out", str(world_dir), "--n-classes", "3",
              "--max-count", "80", "--eval-positives", "6", "--eval-backgrounds", "8"])
    capsys.readouterr()
    run_dir = tmp_path / "run"
    code = cli.main(
        ["--config", str(world_dir / "colearn.config"), "colearn",
         "--out", str(run_dir), "--max-iterations", "2"]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["iterations"] >= 1
    assert (run_dir / "iteration_0.report.json").exists()
    assert (run_dir / "T_final_grid-slot.manifest").exists()
    assert (run_dir / "run.json").exists()


def test_colearn_external_without_rendering_is_rejected(tmp_path, capsys):
    world_dir = tmp_path / "w"
    cli.main(["--seed", "3", "simulate", "--out", str(world_dir), "--n-classes", "2",
              "--max-count", "20", "--eval-positives", "2", "--eval-backgrounds", "2"])
    capsys.readouterr()
    config = world_dir / "colearn.config"
    config.write_text(
        config.read_text(encoding="utf-8")
        + 'slot_a_endpoint = "tcp:127.0.0.1:1"\nslot_b_endpoint = "tcp:127.0.0.1:1"\n',
        encoding="utf-8",
    )
    code = cli.main(["--config", str(config), "colearn", "--out", str(tmp_path / "r")])
    assert code == 1
    assert "render_synth" in capsys.readouterr().err
