//! Soft symbol estimation, the matrix DFE and the multi-user detection
//! schemes built on them.

pub mod dfe;
pub mod mud;
pub mod soft;

pub use dfe::{detect_with_priors, DfeFactorization, DfeMode, DfeOutput, Priors};
pub use mud::{refine, 
    centralized_mud, dc_loss, ic_mud_round, init_variance_dc, interference_noise, mmse_centralized, no_coop_mud,
    run_dc_mud, run_ic_mud, run_no_coop, update_sigma_n, zf_centralized, DcMudNode, DetectionRow, DetectionTrace,
    IcMudNode, LinearEstimate, MudRun, MudSettings, MudSnapshot,
};
pub use soft::{decide, g_lambda, phi, posterior_variance, Decision};
