"""Pipeline stages. Each stage has an in-memory function and fixed on-disk
artifacts under the output directory, so running the stages one by one from
disk gives the same result as one pass in memory."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from . import neuralnet as nn
from .config import PipelineConfig
from .recon_metrics import (
    LabelGrid,
    MetricsReport,
    classify_scan,
    compute_metrics,
    rasterize_truth,
    read_labels_csv,
    write_labels_csv,
    write_outputs,
)
from .scanner import ScanRecord, load_scan, save_scan, simulate_scan
from .spectral_core import PreprocessConfig, preprocess_with
from .synthgen import LabeledDataset, make_dataset

log = logging.getLogger(__name__)

PRETRAINED = "pretrained_model.json"
FINETUNED = "finetuned_model.json"
SCAN_DIR = "scan"
PREDICTION = "labels.csv"


class MissingArtifact(FileNotFoundError):
    pass


def featurize(ds: LabeledDataset, pp: PreprocessConfig) -> LabeledDataset:
    return LabeledDataset([preprocess_with(s, pp) for s in ds.features], ds.labels, ds.class_names)


def pretrain_dataset(cfg: PipelineConfig) -> LabeledDataset:
    raw = make_dataset(cfg.pretrain_materials, cfg.n_pretrain_per_class, cfg.axis.values(), cfg.seeds.pretrain_data)
    return featurize(raw, cfg.preprocess)


def finetune_datasets(cfg: PipelineConfig) -> tuple[LabeledDataset, LabeledDataset]:
    mats = cfg.material_map()
    classes = [mats[c] for c in cfg.finetune_classes]
    axis = cfg.axis.values()
    train = make_dataset(classes, cfg.n_finetune_per_class, axis, cfg.seeds.finetune_data)
    test = make_dataset(classes, cfg.n_test_per_class, axis, cfg.seeds.test_data)
    return featurize(train, cfg.preprocess), featurize(test, cfg.preprocess)


def run_pretrain(cfg: PipelineConfig) -> tuple[nn.Network, nn.TrainHistory]:
    net = nn.init_network(cfg.network, cfg.seeds.pretrain_init)
    return nn.train(net, pretrain_dataset(cfg), cfg.pretrain)


@dataclass
class FinetuneResult:
    network: nn.Network
    history: nn.TrainHistory
    test_accuracy: float


def run_finetune(cfg: PipelineConfig, pretrained: nn.Network) -> FinetuneResult:
    net = nn.replace_head(nn.freeze_all(pretrained), 2, cfg.seeds.head_init)
    train_ds, test_ds = finetune_datasets(cfg)
    net, hist = nn.train(net, train_ds, cfg.finetune)
    return FinetuneResult(net, hist, nn.evaluate(net, test_ds))


def run_scan(cfg: PipelineConfig) -> ScanRecord:
    return simulate_scan(cfg.layout, cfg.plan, cfg.spot, cfg.axis.values(), cfg.seeds.scan, cfg.material_map())


def run_classify(cfg: PipelineConfig, net: nn.Network, rec: ScanRecord) -> LabelGrid:
    return classify_scan(net, rec, cfg.preprocess)


def run_evaluate(cfg: PipelineConfig, pred: LabelGrid, scan_time_s: float) -> tuple[LabelGrid, MetricsReport]:
    truth = rasterize_truth(cfg.layout, cfg.plan)
    report = compute_metrics(
        pred, truth, cfg.layout.positive_area_mm2(), scan_time_s, cfg.boundary_tol_cells
    )
    return truth, report


# --- disk-backed stages --------------------------------------------------------------

def _need(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing upstream artifact: {path}")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def stage_pretrain(cfg: PipelineConfig, out: Path) -> nn.Network:
    out.mkdir(parents=True, exist_ok=True)
    net, hist = run_pretrain(cfg)
    nn.save_model(net, out / PRETRAINED)
    _write_json(out / "pretrain_history.json", hist.to_dict())
    log.info("pretrain: %d epochs, val accuracy %.3f", hist.epochs, hist.val_accuracy[-1])
    return net


def stage_finetune(cfg: PipelineConfig, out: Path, pretrained: nn.Network | None = None) -> nn.Network:
    if pretrained is None:
        pretrained = nn.load_model(_need(out / PRETRAINED))
    res = run_finetune(cfg, pretrained)
    nn.save_model(res.network, out / FINETUNED)
    _write_json(out / "finetune_history.json", {**res.history.to_dict(), "test_accuracy": res.test_accuracy})
    log.info("finetune: %d epochs, test accuracy %.3f", res.history.epochs, res.test_accuracy)
    return res.network


def stage_scan(cfg: PipelineConfig, out: Path) -> ScanRecord:
    rec = run_scan(cfg)
    save_scan(rec, out / SCAN_DIR)
    log.info("scan: %d acquisitions, %.1f s", len(rec), rec.total_time_s)
    return rec


def stage_classify(cfg: PipelineConfig, out: Path, net: nn.Network | None = None, rec: ScanRecord | None = None) -> LabelGrid:
    if net is None:
        net = nn.load_model(_need(out / FINETUNED))
    if rec is None:
        rec = load_scan(_need(out / SCAN_DIR / "manifest.csv").parent)
    grid = run_classify(cfg, net, rec)
    write_labels_csv(grid, out / PREDICTION)
    return grid


def stage_evaluate(cfg: PipelineConfig, out: Path, pred: LabelGrid | None = None, scan_time_s: float | None = None) -> MetricsReport:
    if pred is None:
        pred = read_labels_csv(_need(out / PREDICTION), cfg.plan.step_mm, cfg.plan.origin_mm)
    if scan_time_s is None:
        timing = json.loads(_need(out / SCAN_DIR / "timing.json").read_text())
        scan_time_s = float(timing["total_time_s"])
    truth, report = run_evaluate(cfg, pred, scan_time_s)
    write_outputs(pred, truth, report, out)
    return report


def run_all(cfg: PipelineConfig, out: Path) -> MetricsReport:
    net = stage_pretrain(cfg, out)
    net = stage_finetune(cfg, out, net)
    rec = stage_scan(cfg, out)
    grid = stage_classify(cfg, out, net, rec)
    return stage_evaluate(cfg, out, grid, rec.total_time_s)


def summary_line(m: MetricsReport) -> str:
    def mm(v):
        return "n/a" if v is None else f"{v:.1f} mm"
    return (
        f"area {m.predicted_area_mm2:.1f}/{m.expected_area_mm2:.1f} mm2 "
        f"(accuracy {m.area_accuracy_pct:.1f}%), IoU {m.iou:.3f}, "
        f"boundary IoU {m.boundary_iou:.3f} (tol 0: {m.boundary_iou_tol0:.3f}), "
        f"diameter {mm(m.center_diameter_mm)}, edge-to-edge {mm(m.edge_to_edge_mm)}, "
        f"scan {m.scan_time_s:.1f} s"
    )
