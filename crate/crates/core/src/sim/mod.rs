//! The closed loop: the three forecasters drive the SEIR dynamics day by day,
//! plus joint training, rolling evaluation and forecast metrics.

mod iterate;
mod joint;
mod metrics;
mod rolling;
mod state;
pub mod synthetic;

pub use iterate::{iterate, Trajectory, TrajectoryRecord};
pub use joint::{closed_loop_loss, joint_train, Freeze, JointConfig, JointOutcome, SweepRecord, MIN_TRAIN_DAYS};
pub use metrics::{compute_metrics, MetricsReport};
pub use rolling::{rolling_forecast, window_starts, ForecastPoint, RollingConfig, RollingReport, WindowResult};
pub use state::{Bundle, Exogenous, SimState};
