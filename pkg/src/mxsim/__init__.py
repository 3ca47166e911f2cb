"""Cycle-approximate simulator of a decoupled CPU matrix extension."""

from .archconfig import (ArchConfig, ConfigError, MemoryModel, SizingError,
                         constraint_holds, load_config, peak_throughput,
                         size_scratchpad, sized_config, tile_times,
                         utilization_bound, utilization_bound_for_extent)
from .engine import (Check, Issue, SimReport, TimelineEvent, VecRun,
                     emit_trace, run_program, simulate_op)
from .formats import DTYPES, DataTypeSpec, decode, dtype_spec, encode
from .isa import (DescriptorError, MatMulDescriptor, MatrixUnit, OpHandle,
                  StatusRegister, validate)
from .kernels import (KernelPlan, execute_plan, fill_operands, gemm_sweep,
                      plan_gemm)
from .memimage import MemoryImage, SimMemoryError, TensorBuffer
from .numerics import (Accumulator, PeArithParams, block_dot,
                       matmul_functional, oracle_dot, pe_dot)
from .vector import (VectorConfig, VectorOp, VectorTask, vec_apply, vec_cost,
                     vec_execute)

__version__ = "0.1.0"
