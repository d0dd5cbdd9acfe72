/// How an object may take part in stacking and containment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Can be covered, put in a container, or set on a base.
    Small,
    /// Flat object that can lie on top of a small one.
    Cover,
    /// Flat object other things can stand on.
    Base,
    Container { closable: bool },
    Standalone,
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectKind {
    pub label: &'static str,
    pub role: Role,
    /// Footprint width, footprint depth and height in scene units.
    pub size: (f64, f64, f64),
    /// The attribute this kind carries when it carries one.
    pub affinity: Option<&'static str>,
}

const fn kind(label: &'static str, role: Role, size: (f64, f64, f64), affinity: Option<&'static str>) -> ObjectKind {
    ObjectKind {
        label,
        role,
        size,
        affinity,
    }
}

const FRAGILE: Option<&str> = Some("fragile");
const HEAVY: Option<&str> = Some("heavy");
const HOT: Option<&str> = Some("hot");

pub static CATALOG: [ObjectKind; 34] = [
    kind("credit card", Role::Small, (8.5, 5.4, 0.2), None),
    kind("keys", Role::Small, (6.0, 3.0, 1.0), None),
    kind("phone", Role::Small, (7.0, 14.0, 1.0), None),
    kind("remote", Role::Small, (5.0, 18.0, 2.0), None),
    kind("spoon", Role::Small, (3.0, 16.0, 1.0), None),
    kind("pen", Role::Small, (1.5, 14.0, 1.5), None),
    kind("apple", Role::Small, (8.0, 8.0, 8.0), None),
    kind("sponge", Role::Small, (9.0, 6.0, 3.0), None),
    kind("egg", Role::Small, (4.5, 4.5, 6.0), FRAGILE),
    kind("light bulb", Role::Small, (6.0, 6.0, 11.0), FRAGILE),
    kind("glasses", Role::Small, (14.0, 5.0, 4.0), FRAGILE),
    kind("newspaper", Role::Cover, (30.0, 40.0, 1.0), None),
    kind("towel", Role::Cover, (30.0, 30.0, 2.0), None),
    kind("magazine", Role::Cover, (21.0, 28.0, 1.0), None),
    kind("napkin", Role::Cover, (20.0, 20.0, 0.5), None),
    kind("tray", Role::Base, (40.0, 30.0, 3.0), None),
    kind("cutting board", Role::Base, (35.0, 25.0, 2.0), None),
    kind("book", Role::Base, (17.0, 24.0, 4.0), None),
    kind("box", Role::Container { closable: true }, (30.0, 25.0, 15.0), None),
    kind("lunchbox", Role::Container { closable: true }, (22.0, 16.0, 8.0), None),
    kind("jar", Role::Container { closable: true }, (10.0, 10.0, 15.0), None),
    kind("basket", Role::Container { closable: false }, (35.0, 25.0, 15.0), None),
    kind("bowl", Role::Container { closable: false }, (18.0, 18.0, 7.0), None),
    kind("mug", Role::Standalone, (9.0, 9.0, 10.0), HOT),
    kind("cup", Role::Standalone, (8.0, 8.0, 9.0), None),
    kind("vase", Role::Standalone, (12.0, 12.0, 28.0), FRAGILE),
    kind("kettle", Role::Standalone, (20.0, 16.0, 22.0), HOT),
    kind("pan", Role::Standalone, (28.0, 28.0, 6.0), HOT),
    kind("pot", Role::Standalone, (24.0, 24.0, 18.0), HOT),
    kind("dumbbell", Role::Standalone, (25.0, 10.0, 10.0), HEAVY),
    kind("laptop", Role::Standalone, (33.0, 23.0, 2.0), HEAVY),
    kind("wine glass", Role::Standalone, (8.0, 8.0, 20.0), FRAGILE),
    kind("water jug", Role::Standalone, (14.0, 14.0, 30.0), HEAVY),
    kind("plant", Role::Standalone, (15.0, 15.0, 30.0), None),
];
