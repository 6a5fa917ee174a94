#pragma once

namespace ser {

/// Keeps freed tensor buffers in the heap instead of returning them to the OS.
/// Training allocates and frees the same large buffers every step; without this
/// glibc maps and unmaps them each time. No effect on other C libraries.
void configure_allocator();

}  // namespace ser
