use giteval::geometry::*;
use proptest::prelude::*;

/// Box with corners on the 0.1 px grid, stored in tenths.
#[derive(Debug, Clone, Copy)]
struct GridBox {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

impl GridBox {
    fn to_box(self) -> BoundingBox {
        BoundingBox::new(
            self.x as f64 / 10.0,
            self.y as f64 / 10.0,
            self.w as f64 / 10.0,
            self.h as f64 / 10.0,
        )
    }

    fn covers(self, cx: i64, cy: i64) -> bool {
        cx >= self.x && cx < self.x + self.w && cy >= self.y && cy < self.y + self.h
    }
}

fn grid_box() -> impl Strategy<Value = GridBox> {
    (0i64..300, 0i64..300, 1i64..150, 1i64..150).prop_map(|(x, y, w, h)| GridBox { x, y, w, h })
}

/// IoU, GIoU and DIoU from counting 0.1 px cells; centers are the centroids
/// of the covered cells and the enclosing box is the smallest cell-aligned
/// rectangle covering both.
fn raster_oracle(a: GridBox, b: GridBox) -> (f64, f64, f64) {
    let x0 = a.x.min(b.x);
    let y0 = a.y.min(b.y);
    let x1 = (a.x + a.w).max(b.x + b.w);
    let y1 = (a.y + a.h).max(b.y + b.h);
    let (mut na, mut nb, mut both, mut hull) = (0u64, 0u64, 0u64, 0u64);
    let (mut sa, mut sb) = ([0.0f64; 2], [0.0f64; 2]);
    let (mut hx0, mut hy0, mut hx1, mut hy1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for cy in y0..y1 {
        for cx in x0..x1 {
            let ia = a.covers(cx, cy);
            let ib = b.covers(cx, cy);
            if ia {
                na += 1;
                sa[0] += cx as f64 + 0.5;
                sa[1] += cy as f64 + 0.5;
            }
            if ib {
                nb += 1;
                sb[0] += cx as f64 + 0.5;
                sb[1] += cy as f64 + 0.5;
            }
            if ia && ib {
                both += 1;
            }
            if ia || ib {
                hx0 = hx0.min(cx);
                hy0 = hy0.min(cy);
                hx1 = hx1.max(cx + 1);
                hy1 = hy1.max(cy + 1);
            }
        }
    }
    for _ in hy0..hy1 {
        for _ in hx0..hx1 {
            hull += 1;
        }
    }
    let union = (na + nb - both) as f64;
    let iou = both as f64 / union;
    let giou = iou - (hull as f64 - union) / hull as f64;
    let ca = [sa[0] / na as f64, sa[1] / na as f64];
    let cb = [sb[0] / nb as f64, sb[1] / nb as f64];
    let d2 = (ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2);
    let c2 = ((hx1 - hx0) as f64).powi(2) + ((hy1 - hy0) as f64).powi(2);
    (iou, giou, iou - d2 / c2)
}

/// Containment up to the rounding of `x + w`.
fn nearly_contains(outer: &BoundingBox, inner: &BoundingBox) -> bool {
    let eps = 1e-9;
    inner.x >= outer.x - eps
        && inner.y >= outer.y - eps
        && inner.right() <= outer.right() + eps
        && inner.bottom() <= outer.bottom() + eps
}

fn any_box() -> impl Strategy<Value = BoundingBox> {
    (-500.0f64..500.0, -500.0f64..500.0, 0.01f64..400.0, 0.01f64..400.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
}

fn frame() -> impl Strategy<Value = FrameSize> {
    (1u32..2000, 1u32..2000).prop_map(|(w, h)| FrameSize::new(w, h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn overlaps_match_raster_oracle(a in grid_box(), b in grid_box()) {
        let (oi, og, od) = raster_oracle(a, b);
        let (ba, bb) = (a.to_box(), b.to_box());
        prop_assert!((iou(&ba, &bb) - oi).abs() < 1e-9);
        prop_assert!((giou(&ba, &bb) - og).abs() < 1e-9);
        prop_assert!((diou(&ba, &bb) - od).abs() < 1e-9);
    }

    #[test]
    fn overlaps_are_symmetric_and_ordered(a in any_box(), b in any_box()) {
        let (i, g, d) = (iou(&a, &b), giou(&a, &b), diou(&a, &b));
        prop_assert_eq!(i, iou(&b, &a));
        prop_assert_eq!(g, giou(&b, &a));
        prop_assert_eq!(d, diou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!((-1.0..=1.0).contains(&g));
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert!(g <= i + 1e-12);
        prop_assert!(d <= i + 1e-12);
    }

    #[test]
    fn self_overlap_is_one(a in any_box()) {
        prop_assert_eq!(iou(&a, &a), 1.0);
        prop_assert_eq!(giou(&a, &a), 1.0);
        prop_assert_eq!(diou(&a, &a), 1.0);
    }

    #[test]
    fn point_distance_is_zero_exactly_inside(px in -600.0f64..600.0, py in -600.0f64..600.0, b in any_box()) {
        let p = Point { x: px, y: py };
        prop_assert_eq!(point_to_box_distance(p, &b) == 0.0, b.contains_point(p));
    }

    #[test]
    fn normalizer_is_the_worst_point_of_the_frame(f in frame(), b in any_box()) {
        let norm = npre_normalizer(&b, f);
        let corners = f.corners().map(|c| npre_raw(c, &b));
        prop_assert!(corners.contains(&norm));
        // sample the frame on a coarse grid; nothing may exceed the corners
        for i in 0..=10u32 {
            for j in 0..=10u32 {
                let q = Point {
                    x: f64::from(f.width) * f64::from(i) / 10.0,
                    y: f64::from(f.height) * f64::from(j) / 10.0,
                };
                prop_assert!(npre_raw(q, &b) <= norm * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn npre_grows_along_a_ray(
        f in frame(),
        gx in 0.0f64..1.0, gy in 0.0f64..1.0,
        angle in 0.0f64..std::f64::consts::TAU,
        w in 1.0f64..50.0, h in 1.0f64..50.0,
    ) {
        let gt = BoundingBox::new(
            gx * f64::from(f.width) - w / 2.0,
            gy * f64::from(f.height) - h / 2.0,
            w,
            h,
        );
        let c = gt.center();
        let mut last = 0.0;
        for step in 0..60 {
            let r = step as f64 * 40.0;
            let pred = BoundingBox::new(
                c.x + r * angle.cos() - 5.0,
                c.y + r * angle.sin() - 5.0,
                10.0,
                10.0,
            );
            let v = npre_value(&pred, &gt, f).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn intersection_and_hull_bracket_both_boxes(a in any_box(), b in any_box()) {
        let hull = enclose(&a, &b);
        prop_assert!(nearly_contains(&hull, &a) && nearly_contains(&hull, &b));
        if let Some(i) = intersect(&a, &b) {
            prop_assert!(nearly_contains(&a, &i) && nearly_contains(&b, &i));
        } else {
            prop_assert_eq!(iou(&a, &b), 0.0);
        }
    }
}

#[test]
fn touching_boxes_do_not_overlap() {
    let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
    let b = BoundingBox::new(10.0, 0.0, 10.0, 10.0);
    assert_eq!(iou(&a, &b), 0.0);
    assert!(intersect(&a, &b).is_none());
    assert_eq!(giou(&a, &b), 0.0);
}

#[test]
fn npre_worked_example() {
    let frame = FrameSize::new(100, 100).unwrap();
    let gt = BoundingBox::new(40.0, 40.0, 20.0, 20.0);
    let pred = BoundingBox::new(85.0, 85.0, 10.0, 10.0);
    // 50*sqrt(2) + 20*sqrt(2) over 60*sqrt(2) + 30*sqrt(2)
    assert!((npre_raw(pred.center(), &gt) - 70.0 * 2f64.sqrt()).abs() < 1e-9);
    assert!((npre_normalizer(&gt, frame) - 90.0 * 2f64.sqrt()).abs() < 1e-9);
    let v = npre_value(&pred, &gt, frame).unwrap();
    assert!((v - 0.777778).abs() < 1e-6);
}
