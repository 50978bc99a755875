use tch::Device;

use crate::error::{Error, Result};

/// Environment variable selecting the compute device: `cpu`, `cuda` or `cuda:N`.
pub const DEVICE_ENV: &str = "POROGAN_DEVICE";

pub fn parse_device(s: &str) -> Result<Device> {
    let s = s.trim().to_ascii_lowercase();
    let device = match s.as_str() {
        "" | "cpu" => return Ok(Device::Cpu),
        "cuda" => Device::Cuda(0),
        other => match other.strip_prefix("cuda:").map(str::parse::<usize>) {
            Some(Ok(n)) => Device::Cuda(n),
            _ => return Err(Error::Config(format!("unknown device {s:?}"))),
        },
    };
    if let Device::Cuda(n) = device {
        if n >= tch::Cuda::device_count() as usize {
            return Err(Error::Config(format!("device {s} is not available")));
        }
    }
    Ok(device)
}

/// Device named by `POROGAN_DEVICE`, defaulting to the CPU.
pub fn device_from_env() -> Result<Device> {
    match std::env::var(DEVICE_ENV) {
        Ok(s) => parse_device(&s),
        Err(_) => Ok(Device::Cpu),
    }
}
