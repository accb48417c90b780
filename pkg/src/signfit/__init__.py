"""signfit: 3D articulated upper-body and hand pose fitting for isolated
sign-language signs from 2D keypoint sequences, with linguistic pose priors."""

from .keypoints import (
    CoreInterval,
    Keypoint2D,
    KeypointFrame,
    KeypointSequence,
    TrimConfig,
    core_interval,
    load_keypoint_sequence,
    normalize_sequence,
    save_keypoint_sequence,
    trim_sequence,
)
from .kinematics import (
    Camera,
    HandBasis,
    HandPose,
    BodyPose,
    JointRotation,
    Skeleton,
    cos_dist,
    default_skeleton,
    forward_kinematics,
    load_skeleton,
    mean_pose,
    project,
    reflect_hand_pose,
    slerp_pose,
)
from .linguistic import (
    CandidateConfig,
    ConstraintSpec,
    InvarianceMode,
    ReferencePoseSequence,
    SignClass,
    SignGroup,
    constraints_for_class,
    constraints_for_group,
    estimate_rps,
    group_of_class,
    invariance_loss,
    rps_pose_at,
    select_candidate_frames,
    symmetry_loss,
)
from .hamnosys import (
    HamNoSysAst,
    HamToken,
    TokenKind,
    classify_annotation,
    label_corpus,
    parse,
    parse_annotation,
    tokenize,
)
from .classifier import (
    DecisionTree,
    FeatureVector,
    TreeParams,
    extract_features,
    fallback_tree,
    fit_tree,
    load_tree,
    predict,
    save_tree,
)
from .objective import FitState, ObjectiveConfig, assemble_objective
from .solver import SolveOptions, SolveReport, check_gradient, solve_trust_region_ncg
from .fitting import fit_frame, fit_sequence, init_camera
from .config import RunConfig
from .metrics import PointSetFrame, ablation_run, tr_v2v
from .synthetic import SynthSpec, synth_sequence

__version__ = "0.1.0"
