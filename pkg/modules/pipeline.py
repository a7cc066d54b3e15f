# modules/pipeline.py
"""
End-to-end runner:
  rewire -> Perron vector -> DiLap -> pseudoinverse factors -> commute times
  -> proximity weights -> train -> evaluate -> write
Every stage failure surfaces as a StageError carrying the stage name.
Outputs are a pure function of the config (no timestamps, no absolute out paths).
"""

import logging
import os
from contextlib import contextmanager
from typing import Dict, List, Optional

import numpy as np

from modules import backends, cgnn, commute, datasets, graph_core, rewiring, spectral
from modules.commute import ProximityWeights
from modules.datasets import Dataset
from modules.errors import StageError
from modules.rewiring import RewiringResult
from run_config import RunConfig, config_digest, file_digest, render_config

logger = logging.getLogger("CgnnApp")

STAGES = ("load", "rewire", "perron", "dilap", "svd", "commute", "proximity", "train", "evaluate", "write")
MANIFEST = "manifest.txt"


@contextmanager
def stage(name: str):
    logger.info(f"Stage {name}: start")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, e) from e


def _kv_lines(values: Dict[str, object]) -> str:
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in values.items())


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def write_manifest(out_dir: str) -> str:
    """Sorted `name<TAB>sha256` lines for every regular file in out_dir except the manifest."""
    names = sorted(n for n in os.listdir(out_dir)
                   if n != MANIFEST and os.path.isfile(os.path.join(out_dir, n)))
    path = os.path.join(out_dir, MANIFEST)
    _write_text(path, "".join(f"{n}\t{file_digest(os.path.join(out_dir, n))}\n" for n in names))
    return path


class Pipeline:
    """One run per instance; stages may also be called one by one (CLI subcommands do)."""

    def __init__(self, cfg: RunConfig, dataset: Optional[Dataset] = None):
        self.cfg = cfg
        self.dataset = dataset
        self.rewired: Optional[RewiringResult] = None
        self.pi: Optional[spectral.PerronVector] = None
        self.commute_values: Optional[np.ndarray] = None
        self.weights: Optional[ProximityWeights] = None
        self.params: Optional[cgnn.ModelParams] = None
        self.history: List[Dict[str, float]] = []
        self.metrics: Dict[str, float] = {}
        self.provenance: Dict[str, object] = {}

    # ----- stages -----
    def load(self) -> Dataset:
        if self.dataset is not None:
            return self.dataset
        cfg = self.cfg
        with stage("load"):
            cfg.validate()
            if cfg.synthetic:
                self.dataset = datasets.generate_synthetic(cfg.synthetic, cfg.synth_n,
                                                           cfg.synth_params(), seed=cfg.seed)
            else:
                self.dataset = datasets.load_dataset(cfg.graph, cfg.features, cfg.labels,
                                                     cfg.splits or None, seed=cfg.seed)
        return self.dataset

    def rewire(self) -> RewiringResult:
        ds = self.load()
        with stage("rewire"):
            self.rewired = rewiring.rewire_variant(ds.graph, ds.features, self.cfg.rewiring)
            density = rewiring.density_delta(ds.graph, self.rewired.rewired) if ds.graph.num_edges else float("nan")
            self.provenance.update(added_edges=len(self.rewired.added_edges), density_delta=density)
        return self.rewired

    def compute_commute(self) -> np.ndarray:
        """Commute times over the original graph's edges, measured on the rewired graph."""
        ds = self.load()
        g_rew = (self.rewired or self.rewire()).rewired
        cfg = self.cfg
        pairs = list(ds.graph.edges)

        with stage("perron"):
            p = graph_core.transition_matrix(g_rew)
            self.pi = spectral.perron_vector(p)
            self.provenance["perron_iterations"] = self.pi.iterations_used
        with stage("dilap"):
            t = spectral.dilap(g_rew, p)
            logger.info(f"DiLap: N={t.num_nodes} nnz={t.matrix.nnz}")

        if cfg.backend == "dilap":
            with stage("svd"):
                q = min(cfg.rank_q, g_rew.num_nodes)
                factors = spectral.pseudoinverse_factors(t, q, seed=cfg.seed)
                self.provenance["rank_used"] = factors.rank_q
            with stage("commute"):
                self.commute_values = commute.edge_commute_times(factors, self.pi, pairs)
        else:
            with stage("commute"):
                # ppr teleports over the original graph; dense_oracle uses the rewired chain
                target = ds.graph if cfg.backend == "ppr" else g_rew
                self.commute_values = backends.commute_for_graph(
                    target, pairs, backend=cfg.backend, rank_q=None, seed=cfg.seed,
                    dense_cap=cfg.dense_cap, ppr_gamma=cfg.ppr_gamma)
        return self.commute_values

    def proximity(self) -> ProximityWeights:
        ds = self.load()
        values = self.commute_values if self.commute_values is not None else self.compute_commute()
        with stage("proximity"):
            self.weights = commute.proximity_weights(commute.commute_map(ds.graph.edges, values), ds.graph)
        return self.weights

    def train(self) -> cgnn.ModelParams:
        ds = self.load()
        w = self.weights or self.proximity()
        with stage("train"):
            self.params, self.history = cgnn.train(ds.graph, ds.features, ds.labels, ds.splits, w,
                                                   self.cfg.train_config())
        return self.params

    def evaluate(self) -> Dict[str, float]:
        ds = self.load()
        params = self.params or self.train()
        with stage("evaluate"):
            for name in datasets.SPLIT_NAMES:
                idx = getattr(ds.splits, name)
                if idx.size:
                    self.metrics[f"{name}_acc"] = cgnn.evaluate(params, ds.graph, ds.features,
                                                                ds.labels, idx, self.weights)
            if self.history:
                key = "val_acc" if ds.splits.val.size else "train_acc"
                best = max(self.history, key=lambda r: (r[key], -r["epoch"]))
                self.metrics["best_epoch"] = int(best["epoch"])
                self.metrics["final_train_loss"] = float(self.history[-1]["train_loss"])
            logger.info("Metrics: " + ", ".join(f"{k}={v}" for k, v in self.metrics.items()))
        return self.metrics

    def write(self) -> Dict[str, str]:
        ds = self.load()
        out = self.cfg.out_dir
        with stage("write"):
            os.makedirs(out, exist_ok=True)
            paths = {name: os.path.join(out, name) for name in (
                "proximity_in.tsv", "proximity_out.tsv", "checkpoint.txt", "history.tsv",
                "metrics.txt", "provenance.txt", "config.txt")}
            datasets.write_proximity(paths["proximity_in.tsv"], self.weights.c_in)
            datasets.write_proximity(paths["proximity_out.tsv"], self.weights.c_out)
            cgnn.save_checkpoint(paths["checkpoint.txt"], self.params)
            rows = ["epoch\ttrain_loss\ttrain_acc\tval_acc"]
            rows += [f"{r['epoch']}\t{r['train_loss']!r}\t{r['train_acc']!r}\t{r['val_acc']!r}"
                     for r in self.history]
            _write_text(paths["history.tsv"], "\n".join(rows) + "\n")
            _write_text(paths["metrics.txt"], _kv_lines(self.metrics))
            prov = {"seed": self.cfg.seed, "config_sha256": config_digest(self.cfg),
                    "backend": self.cfg.backend, "rank_q": self.cfg.rank_q,
                    "rewiring": self.cfg.rewiring, "num_nodes": ds.graph.num_nodes,
                    "num_edges": ds.graph.num_edges}
            prov.update(self.provenance)
            _write_text(paths["provenance.txt"], _kv_lines(prov))
            _write_text(paths["config.txt"], render_config(self.cfg))
            paths[MANIFEST] = write_manifest(out)
        logger.info(f"Run written to {out}")
        return paths

    def run(self) -> Dict[str, str]:
        self.load()
        self.rewire()
        self.compute_commute()
        self.proximity()
        self.train()
        self.evaluate()
        return self.write()


def run_pipeline(cfg: RunConfig, dataset: Optional[Dataset] = None) -> Pipeline:
    """Full run; returns the finished Pipeline (artifacts on disk under cfg.out_dir)."""
    pipe = Pipeline(cfg, dataset)
    pipe.run()
    return pipe
