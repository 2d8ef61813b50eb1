//! Mask algebra, connected components and COCO-style RLE.

use arro::mask::{bbox_of, centroid, connected_components, dilate, iou, union};
use arro::{Mask, RleMask};

fn main() -> arro::Result<()> {
    let a = Mask::rect(32, 24, 2, 2, 12, 12);
    let b = Mask::rect(32, 24, 8, 8, 20, 16);
    let both = union(&a, &b)?;
    println!("iou(a, b) = {:.4}", iou(&a, &b)?);
    println!("union area {} bbox {:?} centroid {:?}", both.area(), bbox_of(&both)?, centroid(&both)?);

    let apart = union(&a, &Mask::rect(32, 24, 24, 4, 30, 20))?;
    for (i, c) in connected_components(&apart, 1).iter().enumerate() {
        println!("component {}: area {}", i + 1, c.area());
    }

    let rle = RleMask::encode(&dilate(&both, 1));
    println!("rle {}x{} runs {:?}", rle.w, rle.h, &rle.runs[..rle.runs.len().min(8)]);
    println!("json {}", serde_json::to_string(&rle).expect("rle serializes"));
    assert_eq!(rle.decode()?, dilate(&both, 1));
    Ok(())
}
