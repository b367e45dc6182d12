use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("position ({x}, {y}, {z}) lies outside the room")]
    OutsideRoom { x: f64, y: f64, z: f64 },

    #[error("impulse response carries no energy")]
    ZeroEnergy,

    #[error("negative received power {0} W")]
    NegativePower(f64),

    #[error("hypotheses are not separable: desired mean {m_ds} <= undesired mean {m_us}")]
    NotSeparable { m_ds: f64, m_us: f64 },

    #[error(
        "monte carlo produced too few case-two positions ({case_two} of {total}; \
         case one {case_one}, case three {case_three}, no LOS {no_los})"
    )]
    TooFewSamples {
        total: usize,
        no_los: usize,
        case_one: usize,
        case_two: usize,
        case_three: usize,
    },

    #[error("{users} users need service but only {units} light units exist")]
    TooManyUsers { users: usize, units: usize },

    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
}
