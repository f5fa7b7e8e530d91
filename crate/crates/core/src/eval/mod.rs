//! Scan quality metrics, the simulated manual operator, reports and plots.

pub mod manual;
pub mod plot;
pub mod report;
pub mod spectral;
pub mod stats;

pub use manual::{simulate_manual_scan, ManualOperatorModel, ManualProtocol, ManualRegion};
pub use spectral::{
    channel_std, fingerprint_rmse, fingerprint_std, intensity_histogram, mean_fingerprint, spectral_angle,
    IntensityHistogram,
};
pub use stats::{line_error_stats, line_errors, mean, percentile, speed_stats, speeds, std_dev, LineErrorStats, SpeedStats};
pub use report::{build_report, MetricsReport, ReportConfig, SampleLogs, SampleRow};
pub use plot::{render_plots, write_plots};
