"""Experiment pipeline: generate -> train -> attack -> defend -> explain -> report.

Every stage reads its inputs from and writes its outputs to one directory,
so the CLI can run stages one at a time and ``run_experiment`` simply runs
them all in order. Data preparation (encode, split, scale) is re-derived
from the config in each stage; it is deterministic and cheap.
"""
from __future__ import annotations

import hashlib
import json
import logging
import shutil
import tempfile
import time
from pathlib import Path

import numpy as np

from . import nn
from .attacks import AttackResult, attack_test_set, spec_to_dict
from .config import ExperimentConfig, NamedAttack
from .dataset import (
    ANOMALY, NORMAL, GeneratorConfig, PreparedData, default_schema, enodeb_names, generate,
    label_records, load_csv, prepare, save_csv,
)
from .defense import DefenseConfig, adversarial_train
from .errors import DataError, SonAdvError, StageError
from .explain import affected_feature_report, counts_from_results, feature_deltas, table_to_dicts, write_table_csv
from .metrics import accuracy
from .plot import accuracy_svg

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
STAGES = ("generate", "train", "attack", "defend", "explain", "report")
TOP_K = 6

DATASET_FILE = "dataset.csv"
MODEL_FILE = "model.json"
TRAIN_FILE = "train.json"
REPORT_FILE = "report.json"
SVG_FILE = "accuracy.svg"


def _seed(base: int, stage: int) -> int:
    return int(np.random.SeedSequence([base, stage]).generate_state(1)[0])


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    if not path.exists():
        raise DataError(f"{path.name} not found in {path.parent}; run the earlier stages first")
    return json.loads(path.read_text(encoding="utf-8"))


def _defense_name(config: ExperimentConfig, attack: NamedAttack) -> str:
    if config.defense is not None and config.defense.attack is not None:
        return config.defense.attack.name
    return attack.name


# --- stages ------------------------------------------------------------------

def stage_generate(config: ExperimentConfig, out: Path) -> None:
    if config.csv_path is not None:
        records = load_csv(config.csv_path)
    else:
        records = generate(config.generator)
    if config.label_threshold is not None:
        records = label_records(records, config.label_threshold)
    save_csv(records, out / DATASET_FILE)
    log.info("wrote %d records to %s", len(records), out / DATASET_FILE)


def load_prepared(config: ExperimentConfig, out: Path) -> PreparedData:
    path = out / DATASET_FILE
    if not path.exists():
        raise DataError(f"{DATASET_FILE} not found in {out}; run the generate stage first")
    records = load_csv(path)
    if config.generator is not None:
        enbs = enodeb_names(config.generator.n_enodebs)
    else:
        enbs = sorted({r.enodeb_id for r in records})
    return prepare(records, default_schema(enbs), config.split.ratios, _seed(config.seed, 1),
                   config.split.stratified)


def stage_train(config: ExperimentConfig, out: Path) -> None:
    data = load_prepared(config, out)
    dims = [data.schema.encoded_width, *config.model.hidden, 2]
    model = nn.init_model(dims, config.model.dropout, _seed(config.seed, 2))
    model, report = nn.train(model, data.train.xy, data.valid.xy, config.train)
    nn.save_model(model, out / MODEL_FILE)
    x_te, y_te = data.test.xy
    _write_json(out / TRAIN_FILE, {
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
        "loss_history": report.loss_history,
        "val_loss_history": report.val_loss_history,
        "clean_accuracy": accuracy(nn.predict(model, x_te), y_te),
    })


def _attack_file(out: Path, name: str) -> Path:
    return out / f"attack_{name}.npz"


def stage_attack(config: ExperimentConfig, out: Path) -> None:
    data = load_prepared(config, out)
    model = nn.load_model(out / MODEL_FILE)
    x_te, y_te = data.test.xy
    for attack in config.attacks:
        adv, results = attack_test_set(model, x_te, y_te, attack.spec)
        np.savez(
            _attack_file(out, attack.name),
            adversarial=adv,
            success=np.array([r.success for r in results], dtype=bool),
            queries=np.array([r.queries for r in results], dtype=np.int64),
            n_modified=np.array([len(r.modified_features) for r in results], dtype=np.int64),
        )


def _load_attack(out: Path, name: str) -> dict:
    path = _attack_file(out, name)
    if not path.exists():
        raise DataError(f"{path.name} not found in {out}; run the attack stage first")
    with np.load(path) as npz:
        return {k: npz[k] for k in npz.files}


def stage_defend(config: ExperimentConfig, out: Path) -> None:
    if config.defense is None:
        return
    data = load_prepared(config, out)
    victim = nn.load_model(out / MODEL_FILE)
    sec = config.defense
    defended: dict[str, nn.MlpModel] = {}
    for i, attack in enumerate(config.attacks):
        name = _defense_name(config, attack)
        if name not in defended:
            spec = sec.attack.spec if sec.attack is not None else attack.spec
            dcfg = DefenseConfig(spec, sec.ratio, sec.retrain or config.train, sec.refresh)
            model, rep = adversarial_train(victim, data.train.xy, data.valid.xy, dcfg, _seed(config.seed, 10 + i))
            defended[name] = model
            nn.save_model(model, out / f"defended_{name}.json")
            _write_json(out / f"defense_{name}.json", {
                "n_augmented": rep.n_augmented,
                "epochs_run": rep.train_report.epochs_run,
                "best_epoch": rep.train_report.best_epoch,
                "stopped_early": rep.train_report.stopped_early,
            })


def stage_explain(config: ExperimentConfig, out: Path) -> None:
    data = load_prepared(config, out)
    x_te, _ = data.test.xy
    for attack in config.attacks:
        adv = _load_attack(out, attack.name)["adversarial"]
        table = feature_deltas(x_te, adv, data.schema)
        # the column tally must match the per-example modified-feature sets exactly
        results = [AttackResult.build(x_te[i], adv[i], False, 0) for i in range(len(x_te))]
        expected = counts_from_results([r.modified_features for r in results], data.schema.encoded_width)
        got = np.zeros_like(expected)
        for row in table:
            got[row.feature] = row.nonzero_delta_count
        if not np.array_equal(got, expected):
            raise AssertionError(f"explanation oracle mismatch for attack {attack.name!r}")
        write_table_csv(table, out / f"importance_{attack.name}.csv")
        _write_json(out / f"importance_{attack.name}.json", table_to_dicts(table))


def stage_report(config: ExperimentConfig, out: Path) -> dict:
    data = load_prepared(config, out)
    x_te, y_te = data.test.xy
    victim = nn.load_model(out / MODEL_FILE)
    train_doc = _read_json(out / TRAIN_FILE)
    clean = accuracy(nn.predict(victim, x_te), y_te)
    labels = np.concatenate([data.train.labels, data.valid.labels, data.test.labels])
    non_saturated = int(np.count_nonzero(np.any((x_te > 0) & (x_te < 1), axis=0)))

    attacks = {}
    for attack in config.attacks:
        art = _load_attack(out, attack.name)
        adv = art["adversarial"]
        adv_acc = accuracy(nn.predict(victim, adv), y_te)
        table_doc = _read_json(out / f"importance_{attack.name}.json")
        table = feature_deltas(x_te, adv, data.schema)
        entry = {
            "spec": spec_to_dict(attack.spec),
            "adversarial_accuracy": adv_acc,
            "success_rate": float(art["success"].mean()) if len(adv) else 0.0,
            "mean_queries": float(art["queries"].mean()) if len(adv) else 0.0,
            "mean_modified_features": float(art["n_modified"].mean()) if len(adv) else 0.0,
            "median_modified_features": float(np.median(art["n_modified"])) if len(adv) else 0.0,
            "importance": table_doc,
            "affected_top": affected_feature_report(table, min(TOP_K, len(table)), data.schema),
        }
        if config.defense is not None:
            dname = _defense_name(config, attack)
            model = nn.load_model(out / f"defended_{dname}.json")
            ddoc = _read_json(out / f"defense_{dname}.json")
            adv_post, _ = attack_test_set(model, x_te, y_te, attack.spec)
            post_adv = accuracy(nn.predict(model, adv_post), y_te)
            lost = clean - adv_acc
            entry["defense"] = {
                "defended_by": dname,
                "n_augmented": ddoc["n_augmented"],
                "pre_defense_adv_accuracy": adv_acc,
                "post_defense_adv_accuracy": post_adv,
                "post_defense_clean_accuracy": accuracy(nn.predict(model, x_te), y_te),
                "recovery_gain": post_adv - adv_acc,
                "recovery_fraction": (post_adv - adv_acc) / lost if lost > 0 else 0.0,
            }
        attacks[attack.name] = entry

    echo = config.to_dict()
    echo.pop("output_dir")  # where a run lands is not part of what it computed
    payload = {
        "config": echo,
        "dataset": {
            "n": int(len(labels)),
            "class_counts": {"normal": int(np.sum(labels == NORMAL)), "anomaly": int(np.sum(labels == ANOMALY))},
            "split_sizes": [len(data.train), len(data.valid), len(data.test)],
            "raw_width": data.schema.raw_width,
            "encoded_width": data.schema.encoded_width,
            "feature_names": data.schema.encoded_names(),
            "non_saturated_test_columns": non_saturated,
            "scaler": data.scaler.to_dict(),
        },
        "training": {k: train_doc[k] for k in ("epochs_run", "best_epoch", "stopped_early")},
        "clean_accuracy": clean,
        "attacks": attacks,
    }
    timings_path = out / "timings.json"
    timings = _read_json(timings_path) if timings_path.exists() else {}
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "payload": payload,
        "payload_sha256": payload_digest(payload),
        "timings": timings,
    }
    _write_json(out / REPORT_FILE, report)
    (out / SVG_FILE).write_text(accuracy_svg(clean, attacks), encoding="utf-8")
    return report


def payload_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


STAGE_FUNCS = {
    "generate": stage_generate,
    "train": stage_train,
    "attack": stage_attack,
    "defend": stage_defend,
    "explain": stage_explain,
    "report": stage_report,
}


def run_stage(name: str, config: ExperimentConfig, out) -> object:
    """Run one stage, recording its wall time in ``timings.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result = STAGE_FUNCS[name](config, out)
    except (SonAdvError, OSError, ValueError, AssertionError) as exc:
        raise StageError(name, exc) from exc
    if name != "report":
        path = out / "timings.json"
        timings = _read_json(path) if path.exists() else {}
        timings[name] = round(time.perf_counter() - start, 3)
        _write_json(path, timings)
    return result


def run_experiment(config: ExperimentConfig, output_dir=None) -> dict:
    """Run every stage; on failure nothing is left behind in ``output_dir``."""
    out = Path(output_dir or config.output_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix=".son_adv_", dir=out.parent))
    try:
        for name in STAGES:
            log.info("stage %s", name)
            report = run_stage(name, config, work)
        out.mkdir(exist_ok=True)
        for item in sorted(work.iterdir()):
            shutil.move(str(item), str(out / item.name))
    finally:
        shutil.rmtree(work, ignore_errors=True)
    return report
