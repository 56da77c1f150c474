# multidetect core
