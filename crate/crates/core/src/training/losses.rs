use crate::dmt::LayerTrace;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Mean absolute error over all elements.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "l1_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    pred.sub(target)?.abs()?.mean()
}

/// `Σ_l ‖m⁽ˡ⁾ ⊙ (h⁽ˡ⁾ − ReLU(ĥ⁽ˡ⁾))‖²`, summed over elements.
///
/// `m⁽ˡ⁾` is the video trace's activated mask at layer `l`, broadcast over
/// channels. The prior features are detached, so no gradient reaches the
/// prior.
pub fn migration_loss(video: &LayerTrace, prior: &LayerTrace) -> Result<Tensor> {
    if video.len() != prior.len() || video.is_empty() {
        return Err(Error::shape(
            "migration_loss",
            format!(
                "video trace has {} layers, prior trace {}",
                video.len(),
                prior.len()
            ),
        ));
    }
    let mut total: Option<Tensor> = None;
    for (l, (v, p)) in video.entries.iter().zip(&prior.entries).enumerate() {
        if v.grid.shape() != p.grid.shape() {
            return Err(Error::shape(
                "migration_loss",
                format!("layer {}: {:?} vs {:?}", l, v.grid.shape(), p.grid.shape()),
            ));
        }
        let m = v.masks.broadcast(v.grid.shape()[1]);
        let term = v
            .grid
            .sub(&p.grid.detach().relu()?)?
            .mul(&m)?
            .square()?
            .sum()?;
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one layer"))
}
