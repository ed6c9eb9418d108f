"""Request and response bodies for the HTTP service."""

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ConfigResponse(BaseModel):
    core_edge_mm: float
    shell_outer_edge_mm: float
    wall_thickness_mm: float
    pixel_pitch_mm: float
    grid_size: int
    faces: list[int]
    sensors_per_face: int
    magnets_per_face: int


class Press(BaseModel):
    face: int = Field(ge=1, le=5)
    x: int = Field(ge=1)
    y: int = Field(ge=1)
    depth_mm: float = Field(ge=0.0)


class FrameRequest(BaseModel):
    face: int = Field(ge=1, le=5)
    presses: list[Press] = []
    isolated: bool = False
    noise_sd: float = Field(default=0.0, ge=0.0)
    seed: int = 0


class FrameResponse(BaseModel):
    face: int
    values_ut: list[float]
    rest_ut: list[float]
    forces_n: list[float]


class GenerateRequest(BaseModel):
    face: int = Field(ge=1, le=5)
    scale: float = 0.05
    seed: int = 0
    noise_sd: float = Field(default=2.0, ge=0.0)
    quantize: bool = True
    jobs: int = Field(default=1, ge=1)
    out_dir: str


class GenerateResponse(BaseModel):
    path: str
    face: int
    rows: int
    cases: int
    sha256: str


class TrainOverrides(BaseModel):
    """Optional per-field overrides on the selected training preset."""

    learning_rate: float | None = None
    batch_size: int | None = None
    max_epochs: int | None = None
    lr_decay: float | None = None
    warmup_epochs: int | None = None
    dtype: str | None = None
    val_every: int | None = None
    optimizer: str | None = None


class TrainRequest(BaseModel):
    data_path: str
    out_dir: str
    seed: int = 0
    small: bool = False
    sizes: list[int] | None = None
    overrides: TrainOverrides | None = None


class TrainResponse(BaseModel):
    checkpoint_dir: str
    face: int
    sizes: list[int]
    best_epoch: int
    best_val_loss: float
    train_rows: int
    val_rows: int
    test_rows: int


class EvalRequest(BaseModel):
    checkpoint_dir: str
    data_path: str
    out_dir: str | None = None
    split: str = "test"


class EvalResponse(BaseModel):
    face: int
    split: str
    n_samples: int
    a_sim: float
    e_loc: float
    e_loc_x: float
    e_loc_y: float
    e_f_pct: float
    e_f_newton: float
    a_non: float | None
    summary_path: str | None = None


class StudyRequest(BaseModel):
    seed: int = 0
    scale: float = 0.05
    faces: list[int] | None = None
    small: bool = False
    sizes: list[int] | None = None
    overrides: TrainOverrides | None = None
    noise_sd: float = Field(default=2.0, ge=0.0)
    jobs: int = Field(default=1, ge=1)
    out_dir: str
    factors: list[int] | None = None
    bins: list[float] | None = None
    unseen_face: int = Field(default=1, ge=1, le=5)


class StudyResponse(BaseModel):
    study: str
    out_dir: str
    summary: dict


class ReportRequest(BaseModel):
    run_dir: str
    out_dir: str | None = None


class ReportResponse(BaseModel):
    files: list[str]
