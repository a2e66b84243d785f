fn main() {
    println!("scopeslam");
}
