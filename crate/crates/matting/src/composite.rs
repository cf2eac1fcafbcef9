//! Alpha blending.

use zippo_core::{AlphaMatte, Image};

use crate::error::{Error, Result};

/// Per pixel `alpha * fg + (1 - alpha) * bg`, clamped to [0,1].
pub fn composite(fg: &Image, alpha: &AlphaMatte, bg: &Image) -> Result<Image> {
    if fg.width() != alpha.width()
        || fg.height() != alpha.height()
        || bg.width() != alpha.width()
        || bg.height() != alpha.height()
    {
        return Err(Error::invalid(format!(
            "composite: fg {}x{}, alpha {}x{}, bg {}x{}",
            fg.width(),
            fg.height(),
            alpha.width(),
            alpha.height(),
            bg.width(),
            bg.height()
        )));
    }
    Ok(Image::from_fn(fg.width(), fg.height(), |c, x, y| {
        let a = alpha.get(x, y);
        a * fg.get(c, x, y) + (1.0 - a) * bg.get(c, x, y)
    }))
}
