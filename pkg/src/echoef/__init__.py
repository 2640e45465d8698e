"""echoef: video-based ejection-fraction estimation on a synthetic benchmark."""

from .attention import (
    MotionExcitation,
    SemanticTCA,
    SqueezeExcitation,
    TemporalChannelAttention,
    dilate_mask,
    excite,
    mask_to_gate,
    temporal_pool,
)
from .backbone import BackboneConfig, Encoder, backbone_config, count_params
from .config import ExperimentConfig, parse_config
from .errors import (
    EchoefError,
    FormatError,
    InvalidConfigError,
    InvalidInputError,
    InvalidLabelError,
    TrainingDivergedError,
    UnsupportedOperationError,
)
from .head import (
    AnchorCoding,
    AnchorHead,
    AnchorPrediction,
    DirectRegressionHead,
    EfEstimate,
    anchor_centers,
    decode,
    encode_label,
)
from .losses import (
    LossBundle,
    aux_loss,
    bce_spatial,
    cls_loss,
    dsc,
    reg_loss,
    seg_loss,
    smooth_l1,
    total_loss,
)
from .metrics import MetricReport, cam, compute_metrics, predict_video
from .model import EfVideoModel, ModelOutput, attention_plan, build_model
from .segbranch import MaskPath, SegmentationBranch, aggregate, temporal_relevance
from .synth import (
    ClipSpec,
    EchoDataset,
    SyntheticVideo,
    VideoParams,
    degrade,
    ef_from_areas,
    generate_dataset,
    generate_video,
    random_video,
    read_dataset,
    sample_clip,
    write_dataset,
)
from .teacher import (
    PseudoLabelSet,
    QualityWeight,
    TeacherConfig,
    TeacherNet,
    infer_masks,
    pseudolabel_dataset,
    quality_weight,
    select_pseudo,
    train_teacher,
)

__version__ = "0.1.0"
