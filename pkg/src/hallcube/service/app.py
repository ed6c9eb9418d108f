"""HTTP facade over the pipeline: physics reads, data, training, studies.

Every handler is a thin adapter: request models in, core calls, response
models out. All state lives on disk under caller-chosen directories, so
the service itself is stateless and safe to restart.
"""

import math
import os
from dataclasses import replace

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..datagen import (
    dataset_sha256,
    generate_face_dataset,
    read_dataset,
    rest_frame,
    sweep_face_frames,
    sweep_magnet_positions,
    write_dataset,
)
from ..deformation import default_params, force_from_depth, force_range_grid
from ..errors import (
    ConfigurationError,
    DomainError,
    IntegrityError,
    ParseError,
    RangeError,
    SingularityError,
    TrainingError,
    UsageError,
)
from ..experiments import (
    STUDIES,
    SplitSpec,
    StudyConfig,
    default_train_config,
    derive_seed,
    evaluate_dataset,
    render_report,
    report_to_dict,
    run_ablation,
    run_crossface,
    run_sensitivity,
    run_table1,
    run_unseen,
    scrub_json,
    split_dataset,
    train_face_pipeline,
    write_json,
)
from ..geometry import default_config, validate_coord
from ..metrics import samples_csv
from ..model import (
    COMPACT_SIZES,
    FULL_SIZES,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
)
from . import schemas

_RUNNERS = {
    "table1": run_table1,
    "unseen": run_unseen,
    "ablation": run_ablation,
    "crossface": run_crossface,
    "sensitivity": run_sensitivity,
}

_BAD_REQUEST = (ConfigurationError, UsageError, DomainError, RangeError,
                SingularityError)


def resolve_training(small: bool, sizes: list[int] | None,
                     overrides: schemas.TrainOverrides | None,
                     grid_size: int) -> tuple[list[int], TrainConfig]:
    """Pick layer sizes and a training preset from request flags.

    Default is the full-width reference architecture at its stock
    settings; `small` swaps in the compact surrogate with its tuned
    schedule. Explicit sizes win over both.
    """
    if sizes is None:
        sizes = list(COMPACT_SIZES) if small else list(FULL_SIZES)
    else:
        sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or sizes[0] != 9 or sizes[-1] != grid_size ** 2:
        raise UsageError(
            f"layer sizes must run from 9 inputs to {grid_size ** 2} outputs,"
            f" got {sizes}")
    cfg = default_train_config() if small else TrainConfig()
    if overrides is not None:
        fields = {k: v for k, v in overrides.model_dump().items()
                  if v is not None}
        if fields:
            cfg = replace(cfg, **fields)
    return sizes, cfg


def study_summary(result: dict) -> dict:
    """The JSON-safe summary block for a finished study result."""
    if result["study"] == "table1":
        body = {"faces": {str(f): s for f, s in result["faces"].items()},
                "thresholds": {str(f): t for f, t in result["thresholds"].items()}}
    elif result["study"] == "ablation":
        body = {"factors": {str(f): s for f, s in result["factors"].items()},
                "train_counts": {str(f): c for f, c in result["train_counts"].items()}}
    else:
        body = result["summary"]
    return scrub_json(body)


def create_app() -> FastAPI:
    app = FastAPI(title="hallcube", version=__version__)
    config = default_config()
    params = default_params(config)
    grid = config.grid_size

    def _detail(exc: Exception, code: int) -> JSONResponse:
        return JSONResponse(status_code=code, content={"detail": str(exc)})

    for klass in _BAD_REQUEST:
        app.add_exception_handler(
            klass, lambda req, exc, _c=400: _detail(exc, _c))
    app.add_exception_handler(ParseError, lambda req, exc: _detail(exc, 422))
    app.add_exception_handler(FileNotFoundError,
                              lambda req, exc: _detail(exc, 404))
    app.add_exception_handler(IntegrityError,
                              lambda req, exc: _detail(exc, 409))
    app.add_exception_handler(TrainingError,
                              lambda req, exc: _detail(exc, 500))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/config", response_model=schemas.ConfigResponse)
    def get_config() -> schemas.ConfigResponse:
        first = config.faces[0]
        return schemas.ConfigResponse(
            core_edge_mm=config.core_edge,
            shell_outer_edge_mm=config.shell_outer_edge,
            wall_thickness_mm=config.wall_thickness,
            pixel_pitch_mm=config.pixel_pitch,
            grid_size=grid,
            faces=config.face_indices,
            sensors_per_face=len(first.sensors),
            magnets_per_face=len(first.magnets),
        )

    @app.post("/physics/frame", response_model=schemas.FrameResponse)
    def physics_frame(req: schemas.FrameRequest) -> schemas.FrameResponse:
        config.face(req.face)
        presses: dict[int, tuple[list[tuple[int, int]], float]] = {}
        for p in req.presses:
            config.face(p.face)
            coord = validate_coord(config, (p.x, p.y))
            tips, depth = presses.setdefault(p.face, ([], p.depth_mm))
            if p.depth_mm != depth:
                raise UsageError(
                    f"face {p.face} presses must share one depth per frame")
            if (coord.x, coord.y) in tips:
                raise UsageError(f"duplicate press at {coord} on face {p.face}")
            if len(tips) == 3:
                raise UsageError(f"face {p.face} supports at most 3 presses")
            tips.append((coord.x, coord.y))
        forces = [force_from_depth(p.depth_mm, p.face, (p.x, p.y), params)
                  for p in req.presses]
        sweep = {f: (tips, np.array([depth]))
                 for f, (tips, depth) in presses.items()}
        pos = sweep_magnet_positions(config, params, sweep)
        values = sweep_face_frames(config, pos, req.face,
                                   isolated=req.isolated)[0]
        if req.noise_sd > 0:
            rng = np.random.default_rng(req.seed)
            values = values + rng.standard_normal(9) * req.noise_sd
        rest = rest_frame(config, req.face, isolated=req.isolated).values
        return schemas.FrameResponse(
            face=req.face,
            values_ut=[float(v) for v in values],
            rest_ut=[float(v) for v in rest],
            forces_n=[float(f) for f in forces],
        )

    @app.post("/datasets/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
        ds = generate_face_dataset(req.face, req.scale, config, params,
                                   req.seed, noise_sd=req.noise_sd,
                                   quantize=req.quantize, jobs=req.jobs)
        os.makedirs(req.out_dir, exist_ok=True)
        path = os.path.join(req.out_dir, f"face{req.face}.csv")
        write_dataset(ds, path)
        return schemas.GenerateResponse(
            path=path, face=req.face, rows=len(ds),
            cases=len(set(ds.case_ids.tolist())),
            sha256=dataset_sha256(ds),
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_model(req: schemas.TrainRequest) -> schemas.TrainResponse:
        ds = read_dataset(req.data_path)
        sizes, tcfg = resolve_training(req.small, req.sizes, req.overrides,
                                       grid)
        split_seed = derive_seed(req.seed, "split", ds.face)
        split = split_dataset(ds, SplitSpec(seed=split_seed))
        tcfg = replace(tcfg, seed=derive_seed(req.seed, "train", ds.face))
        ckpt, threshold = train_face_pipeline(split.train, split.val, sizes,
                                              tcfg, grid)
        ckpt.provenance.update({
            "face": int(ds.face),
            "non_contact_threshold": float(threshold),
            "split_seed": int(split_seed),
            "master_seed": int(req.seed),
            "dataset_sha256": dataset_sha256(ds),
        })
        ckpt_dir = save_checkpoint(ckpt, os.path.join(req.out_dir,
                                                      "checkpoint"))
        return schemas.TrainResponse(
            checkpoint_dir=ckpt_dir,
            face=int(ds.face),
            sizes=sizes,
            best_epoch=int(ckpt.provenance["best_epoch"]),
            best_val_loss=float(ckpt.provenance["best_val_loss"]),
            train_rows=len(split.train),
            val_rows=len(split.val),
            test_rows=len(split.test),
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_model(req: schemas.EvalRequest) -> schemas.EvalResponse:
        ckpt = load_checkpoint(req.checkpoint_dir)
        ds = read_dataset(req.data_path)
        prov = ckpt.provenance or {}
        trained_face = prov.get("face")
        if trained_face is not None and int(trained_face) != int(ds.face):
            raise UsageError(
                f"face mismatch: checkpoint was trained on face"
                f" {trained_face}, dataset holds face {ds.face}")
        threshold = prov.get("non_contact_threshold")
        if threshold is None:
            raise UsageError("checkpoint lacks a stored non-contact"
                             " threshold; train it via this service")
        if req.split == "test":
            split_seed = prov.get("split_seed")
            if split_seed is None:
                raise UsageError("checkpoint lacks a split seed; evaluate"
                                 " with split='all'")
            part = split_dataset(ds, SplitSpec(seed=int(split_seed))).test
        elif req.split == "all":
            part = ds
        else:
            raise UsageError(f"unknown split {req.split!r};"
                             " expected 'test' or 'all'")
        report = evaluate_dataset(ckpt, float(threshold), part,
                                  force_range_grid(params, ds.face), grid)
        summary_path = None
        if req.out_dir:
            os.makedirs(req.out_dir, exist_ok=True)
            summary_path = os.path.join(req.out_dir, "summary.json")
            write_json(summary_path, {
                "face": int(ds.face), "split": req.split,
                "checkpoint_dir": req.checkpoint_dir,
                "data_path": req.data_path,
                "metrics": report_to_dict(report),
            })
            with open(os.path.join(req.out_dir, "samples.csv"), "w") as fh:
                fh.write(samples_csv(report))
        a_non = report.a_non
        return schemas.EvalResponse(
            face=int(ds.face),
            split=req.split,
            n_samples=report.n_samples,
            a_sim=report.a_sim,
            e_loc=report.e_loc,
            e_loc_x=report.e_loc_x,
            e_loc_y=report.e_loc_y,
            e_f_pct=report.e_f_pct,
            e_f_newton=report.e_f_newton,
            a_non=None if not math.isfinite(a_non) else a_non,
            summary_path=summary_path,
        )

    @app.post("/studies/{study}", response_model=schemas.StudyResponse)
    def run_study(study: str, req: schemas.StudyRequest) -> schemas.StudyResponse:
        if study not in STUDIES:
            raise UsageError(f"unknown study {study!r};"
                             f" expected one of {', '.join(STUDIES)}")
        sizes, tcfg = resolve_training(req.small, req.sizes, req.overrides,
                                       grid)
        kwargs = dict(
            study=study,
            scale=req.scale,
            seed=req.seed,
            sizes=sizes,
            train=tcfg,
            noise_sd=req.noise_sd,
            jobs=req.jobs,
            out_dir=req.out_dir,
            unseen_face=req.unseen_face,
        )
        if req.faces is not None:
            kwargs["faces"] = tuple(int(f) for f in req.faces)
        elif study == "crossface":
            kwargs["faces"] = (3, 5)
        if req.factors is not None:
            kwargs["factors"] = tuple(int(f) for f in req.factors)
        if req.bins is not None:
            kwargs["bins"] = tuple(float(b) for b in req.bins)
        result = _RUNNERS[study](StudyConfig(**kwargs), config, params)
        return schemas.StudyResponse(study=study, out_dir=req.out_dir,
                                     summary=study_summary(result))

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest) -> schemas.ReportResponse:
        return schemas.ReportResponse(
            files=render_report(req.run_dir, req.out_dir))

    return app


app = create_app()
