//! Client for the planning "director": prompt decomposition and the
//! step-by-step scale, endpoint and path queries, with a deterministic mock.

pub mod audit;
pub mod error;
pub mod protocol;
pub mod remote;
pub mod session;
pub mod transport;
pub mod validate;

pub use audit::{read_records, AuditLog, AuditRecord};
pub use error::{DirectorError, Result};
pub use protocol::{
    DirectorRequest, DirectorResponse, EndpointEstimate, ModelParams, PathEstimate, PromptDecomposition,
    ScaleEstimate, Task,
};
pub use remote::RemoteScoreProvider;
pub use session::{is_static_motion, Director, DirectorConfig, ObjectPlan, PlanSession, Templates};
pub use transport::{HttpTransport, MockTransport, ReplayTransport, Transport};
pub use validate::{validate_trajectory, Bounds, Flag};
