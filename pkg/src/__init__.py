# Non-uniform semigroup stability laboratory
