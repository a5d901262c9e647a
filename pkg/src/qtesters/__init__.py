"""Compatibility and robustness of incompatibility for quantum testers."""

from qtesters.errors import (ChainViolationError, DimensionError, NotHermitianError,
                             NotNormalizedError, NotProductNormalizedError, NotPsdError, SdpFailure,
                             TraceNotOneError, ValidationError)
from qtesters.kernels import BACKEND
from qtesters.linalg import (Operator, identity, omega, partial_trace, partial_transpose, permute,
                             projector, spectral_decompose, swap_operator, tensor, trace_norm)
from qtesters.objects import (ChoiOperator, DensityOperator, NComb, NTester, Povm, Tester,
                              TesterSetup, ancilla_free_decomposition, born_probabilities,
                              canonical_implementation, canonical_povm, choi_from_kraus, make_tester,
                              nborn_probabilities, ncomb_from_choi, ntester_from_tester,
                              object_from_json, object_to_json, tester_from_setup, validate_choi,
                              validate_density, validate_ncomb, validate_ntester, validate_povm,
                              validate_tester)
from qtesters.sdp import SdpProblem, SdpSolution, feasibility, solve
from qtesters.compat import (CompatibilityVerdict, StructuralFlags, povm_compatibility,
                             structural_predicates, tester_compatibility,
                             two_outcome_tester_compatibility, verify_joint)
from qtesters.robustness import (BoundReport, RobustnessResult, bounds, measurement_robustness,
                                 nteste_discrimination_bound, replay_witness, state_robustness,
                                 tester_robustness_bisection, tester_robustness_two_outcome)
from qtesters.scenarios import (extremal_povm_decomposition, named_testers, polarization_pair,
                                region_m, region_m_witness, sweep)

__version__ = "0.1.0"
