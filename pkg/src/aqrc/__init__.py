"""Analog quantum reservoir computing simulator.

A driven qubit-oscillator system whose measurement trajectories are turned
into central-moment features and classified by a trained linear readout,
with closed-form oracles validating the Monte-Carlo engine.
"""

from .errors import (
    AqrcError, ConfigError, DegenerateReservoir, IncompleteProjectors,
    IntegratorDrift, NonFiniteLoss, SignalTooShort, SingularSystem,
    TooFewShots, TruncationGuardTripped, TruncationRisk,
)
from .fock import (
    DenseOperator, HilbertDims, JointState, SystemParams, coherent_state,
    destroy, displacement, evolve, make_vacuum, measure, number,
    parity_projectors,
)
from .engine import DisplacementKernel, ProtocolConfig
from .reservoir import (
    MultiQubitGrid, TrajectoryRecord, cnod, function_space_rank,
    geometric_phase_oracle, kerr_revival_check,
    multiqubit_conditional_displacement, parity_trajectory_oracle,
    qubit_rotation, run_round, run_shot,
)
from .signals import (
    ComplexSignal, FilterKernel, LabeledExample, gen_filtered_noise,
    gen_modulated, gen_spiral, kernel_table,
)
from .features import (
    FeatureVector, MomentFeatureSpec, central_moments, feature_dimension,
    sample_distribution,
)
from .learn import (
    ReadoutModel, TrainConfig, evaluate, fit_readout, svd_project,
    shots_sweep, train_pseudoinverse, train_softmax,
)
from .baselines import (
    LesnConfig, cavity_only_features, lesn_build, lesn_run, qubit_only_run,
)

__version__ = "0.1.0"
